//! Commuting-subgroup machinery: public eigenbasis matrices and private
//! elements of the form `E^{-1} * diag(lambda) * E`.
//!
//! Two elements built over the same basis `E` are simultaneously
//! diagonalized, hence commute exactly. Assigning one basis to each
//! constrained pair is what makes the protocol's six commutator
//! restrictions hold by construction rather than by luck.

use thiserror::Error;

use crate::field::{FieldElement, FieldParams};
use crate::matrix::{commutator, MatError, SquareMatrix};
use crate::protocol::{InitiatorPrivate, PublicSetup, ResponderPrivate};
use crate::rng::MatrixRng;

/// Errors raised while building commutant elements.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommutantError {
    /// `F_p` has fewer than `dim` distinct nonzero residues.
    #[error("field F_{p} too small: need p - 1 >= {dim} for {dim} distinct nonzero eigenvalues")]
    FieldTooSmall { p: u64, dim: usize },
    /// An eigenvalue vector contains zero.
    #[error("eigenvalue vectors must be nonzero in every slot")]
    ZeroEigenvalue,
    /// An eigenvalue vector repeats a value.
    #[error("eigenvalue vectors must have pairwise distinct entries")]
    RepeatedEigenvalue,
    /// A proposed eigenbasis is not invertible.
    #[error("eigenbasis matrix must lie in GL(d, F_p)")]
    SingularBasis,
}

/// A vector of `d` nonzero eigenvalues, pairwise distinct when produced by
/// the sampler.
///
/// Honest private keys always carry distinct entries; [`Self::from_nonzero`]
/// relaxes distinctness for diagnostic vectors (recovered attack factors,
/// degenerate test fixtures) where only nonzeroness is meaningful.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EigenvalueVector {
    values: Vec<FieldElement>,
}

impl EigenvalueVector {
    /// Checked constructor: every value nonzero and pairwise distinct.
    pub fn new(values: Vec<FieldElement>) -> Result<Self, CommutantError> {
        let v = Self::from_nonzero(values)?;
        if !v.is_pairwise_distinct() {
            return Err(CommutantError::RepeatedEigenvalue);
        }
        Ok(v)
    }

    /// Constructor enforcing only nonzeroness.
    pub fn from_nonzero(values: Vec<FieldElement>) -> Result<Self, CommutantError> {
        if values.iter().any(|v| v.is_zero()) {
            return Err(CommutantError::ZeroEigenvalue);
        }
        Ok(EigenvalueVector { values })
    }

    pub fn values(&self) -> &[FieldElement] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_pairwise_distinct(&self) -> bool {
        for (i, a) in self.values.iter().enumerate() {
            if self.values[i + 1..].contains(a) {
                return false;
            }
        }
        true
    }

    /// Slotwise product of two vectors.
    pub fn elementwise_mul(&self, other: &Self, params: FieldParams) -> Self {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| params.mul(a, b))
            .collect();
        EigenvalueVector { values }
    }

    /// Slotwise inverse (total: entries are nonzero by construction).
    pub fn elementwise_inv(&self, params: FieldParams) -> Self {
        let values = self
            .values
            .iter()
            .map(|&a| params.inv(a).expect("eigenvalues are nonzero"))
            .collect();
        EigenvalueVector { values }
    }
}

/// Names of the six public eigenbases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisLabel {
    O,
    P,
    Q,
    R,
    S,
    T,
}

impl BasisLabel {
    pub const ALL: [BasisLabel; 6] = [
        BasisLabel::O,
        BasisLabel::P,
        BasisLabel::Q,
        BasisLabel::R,
        BasisLabel::S,
        BasisLabel::T,
    ];

    pub fn index(self) -> usize {
        match self {
            BasisLabel::O => 0,
            BasisLabel::P => 1,
            BasisLabel::Q => 2,
            BasisLabel::R => 3,
            BasisLabel::S => 4,
            BasisLabel::T => 5,
        }
    }
}

impl std::fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = match self {
            BasisLabel::O => 'O',
            BasisLabel::P => 'P',
            BasisLabel::Q => 'Q',
            BasisLabel::R => 'R',
            BasisLabel::S => 'S',
            BasisLabel::T => 'T',
        };
        write!(f, "{c}")
    }
}

/// A labeled public eigenbasis: an invertible matrix whose inverse is cached
/// because every commutant element conjugates by it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EigenBasis {
    label: BasisLabel,
    matrix: SquareMatrix,
    inverse: SquareMatrix,
}

impl EigenBasis {
    pub fn new(label: BasisLabel, matrix: SquareMatrix) -> Result<Self, CommutantError> {
        let inverse = matrix
            .inverse()
            .map_err(|_| CommutantError::SingularBasis)?;
        Ok(EigenBasis {
            label,
            matrix,
            inverse,
        })
    }

    pub fn label(&self) -> BasisLabel {
        self.label
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &SquareMatrix {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

/// Samples `dim` distinct nonzero eigenvalues, uniform over all such tuples.
///
/// Draws uniform nonzero residues and rejects repeats, which conditions each
/// accepted draw to be uniform over the unused values.
pub fn sample_eigenvalues(
    rng: &mut MatrixRng,
    dim: usize,
    params: FieldParams,
) -> Result<EigenvalueVector, CommutantError> {
    let p = params.modulus();
    if p - 1 < dim as u64 {
        return Err(CommutantError::FieldTooSmall { p, dim });
    }
    let mut values: Vec<FieldElement> = Vec::with_capacity(dim);
    while values.len() < dim {
        let v = rng.nonzero_residue(params);
        if !values.contains(&v) {
            values.push(v);
        }
    }
    Ok(EigenvalueVector { values })
}

/// Builds the commutant element `E^{-1} * diag(eig) * E`.
///
/// The result is invertible (its determinant is the product of the
/// eigenvalues, all nonzero), and any two outputs sharing a basis commute.
pub fn conjugated_diag(
    basis: &EigenBasis,
    eig: &EigenvalueVector,
) -> Result<SquareMatrix, MatError> {
    if eig.len() != basis.dim() {
        return Err(MatError::DimMismatch {
            left: basis.dim(),
            right: eig.len(),
        });
    }
    let diag = SquareMatrix::diagonal(basis.matrix.params(), eig.values());
    basis.inverse.mul(&diag)?.mul(&basis.matrix)
}

/// Result of checking one commutator restriction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommutationCheck {
    pub pair: &'static str,
    pub holds: bool,
}

/// Evaluates the six commutator restrictions
/// `[a1,y0], [a2,y1], [a3,y2], [b1,x1], [b2,x2], [b3,x3]` against identity.
///
/// All six hold exactly for honestly constructed keys; the setup argument
/// fixes the expected dimension.
pub fn verify_commutation_pairs(
    setup: &PublicSetup,
    alice: &InitiatorPrivate,
    bob: &ResponderPrivate,
) -> Vec<CommutationCheck> {
    let id = SquareMatrix::identity(setup.params(), setup.dim());
    let pairs: [(&'static str, &SquareMatrix, &SquareMatrix); 6] = [
        ("[a1, y0]", &alice.a1, &bob.y0),
        ("[a2, y1]", &alice.a2, &bob.y1),
        ("[a3, y2]", &alice.a3, &bob.y2),
        ("[b1, x1]", &bob.b1, &alice.x1),
        ("[b2, x2]", &bob.b2, &alice.x2),
        ("[b3, x3]", &bob.b3, &alice.x3),
    ];
    pairs
        .into_iter()
        .map(|(pair, a, b)| CommutationCheck {
            pair,
            holds: commutator(a, b).map(|c| c == id).unwrap_or(false),
        })
        .collect()
}
