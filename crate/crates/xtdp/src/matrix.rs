//! `d x d` matrix algebra over `F_p`: the monoid `M_d` and the general
//! linear group `GL(d, F_p)`, with inversion, conjugation and commutators.
//!
//! Matrices are immutable values; all operations are pure and exact, and
//! equality is entrywise on canonical residues.

use thiserror::Error;

use crate::field::{FieldElement, FieldError, FieldParams};

/// Errors raised by matrix algebra.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatError {
    /// Operands have different dimensions.
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    /// Operands live over different fields.
    #[error("field mismatch: F_{left} vs F_{right}")]
    FieldMismatch { left: u64, right: u64 },
    /// Gauss-Jordan elimination found no pivot: the matrix is not in GL.
    #[error("matrix is singular")]
    Singular,
    /// An entry grid does not form a square matrix of the stated dimension.
    #[error("malformed matrix data: {0}")]
    BadShape(&'static str),
}

/// A square matrix over `F_p`, entries row-major and always canonical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SquareMatrix {
    params: FieldParams,
    dim: usize,
    entries: Vec<FieldElement>,
}

impl SquareMatrix {
    /// All-zeros matrix.
    pub fn zeros(params: FieldParams, dim: usize) -> Self {
        SquareMatrix {
            params,
            dim,
            entries: vec![FieldElement::ZERO; dim * dim],
        }
    }

    /// Identity matrix of order `dim`.
    pub fn identity(params: FieldParams, dim: usize) -> Self {
        let mut m = Self::zeros(params, dim);
        for i in 0..dim {
            m.entries[i * dim + i] = FieldElement::ONE;
        }
        m
    }

    /// Diagonal matrix with the given entries.
    pub fn diagonal(params: FieldParams, diag: &[FieldElement]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(params, dim);
        for (i, &v) in diag.iter().enumerate() {
            m.entries[i * dim + i] = v;
        }
        m
    }

    /// Builds a matrix from a row-major entry vector (must have `dim * dim`
    /// canonical elements).
    pub fn from_entries(
        params: FieldParams,
        dim: usize,
        entries: Vec<FieldElement>,
    ) -> Result<Self, MatError> {
        if dim == 0 {
            return Err(MatError::BadShape("dimension must be at least 1"));
        }
        if entries.len() != dim * dim {
            return Err(MatError::BadShape("entry count is not dim * dim"));
        }
        Ok(SquareMatrix {
            params,
            dim,
            entries,
        })
    }

    /// Convenience constructor from integer rows (reduced mod p).
    pub fn from_rows(params: FieldParams, rows: &[Vec<u64>]) -> Result<Self, MatError> {
        let dim = rows.len();
        if dim == 0 {
            return Err(MatError::BadShape("dimension must be at least 1"));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(MatError::BadShape("rows must all have length dim"));
            }
            entries.extend(row.iter().map(|&v| params.element(v)));
        }
        Ok(SquareMatrix {
            params,
            dim,
            entries,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn params(&self) -> FieldParams {
        self.params
    }

    #[inline]
    pub fn entries(&self) -> &[FieldElement] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> FieldElement {
        self.entries[row * self.dim + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: FieldElement) {
        self.entries[row * self.dim + col] = v;
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity(self.params, self.dim)
    }

    fn check_compatible(&self, other: &Self) -> Result<(), MatError> {
        if self.params != other.params {
            return Err(MatError::FieldMismatch {
                left: self.params.modulus(),
                right: other.params.modulus(),
            });
        }
        if self.dim != other.dim {
            return Err(MatError::DimMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    /// Entrywise sum.
    pub fn add(&self, other: &Self) -> Result<Self, MatError> {
        self.check_compatible(other)?;
        let f = self.params;
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(&a, &b)| f.add(a, b))
            .collect();
        Ok(SquareMatrix {
            params: f,
            dim: self.dim,
            entries,
        })
    }

    /// Standard matrix product over `F_p`.
    pub fn mul(&self, other: &Self) -> Result<Self, MatError> {
        self.check_compatible(other)?;
        let f = self.params;
        let d = self.dim;
        let mut out = Self::zeros(f, d);
        for i in 0..d {
            for k in 0..d {
                let a_ik = self.entries[i * d + k];
                if a_ik.is_zero() {
                    continue;
                }
                for j in 0..d {
                    let cur = out.entries[i * d + j];
                    out.entries[i * d + j] = f.add(cur, f.mul(a_ik, other.entries[k * d + j]));
                }
            }
        }
        Ok(out)
    }

    /// Left-to-right product of a factor chain.
    pub fn product(factors: &[&SquareMatrix]) -> Result<SquareMatrix, MatError> {
        let (first, rest) = factors
            .split_first()
            .ok_or(MatError::BadShape("empty factor chain"))?;
        let mut acc = (*first).clone();
        for m in rest {
            acc = acc.mul(m)?;
        }
        Ok(acc)
    }

    /// Inverse by Gauss-Jordan elimination with first-nonzero pivoting
    /// (field arithmetic is exact, so any nonzero pivot serves).
    pub fn inverse(&self) -> Result<Self, MatError> {
        let f = self.params;
        let d = self.dim;
        let mut a = self.entries.clone();
        let mut inv = Self::identity(f, d).entries;

        for col in 0..d {
            let pivot_row = (col..d)
                .find(|&r| !a[r * d + col].is_zero())
                .ok_or(MatError::Singular)?;
            if pivot_row != col {
                for j in 0..d {
                    a.swap(col * d + j, pivot_row * d + j);
                    inv.swap(col * d + j, pivot_row * d + j);
                }
            }
            let pivot_inv = f.inv(a[col * d + col]).map_err(|e| match e {
                FieldError::ZeroInverse => MatError::Singular,
                _ => MatError::Singular,
            })?;
            for j in 0..d {
                a[col * d + j] = f.mul(a[col * d + j], pivot_inv);
                inv[col * d + j] = f.mul(inv[col * d + j], pivot_inv);
            }
            for r in 0..d {
                if r == col {
                    continue;
                }
                let factor = a[r * d + col];
                if factor.is_zero() {
                    continue;
                }
                for j in 0..d {
                    let sub_a = f.mul(factor, a[col * d + j]);
                    a[r * d + j] = f.sub(a[r * d + j], sub_a);
                    let sub_i = f.mul(factor, inv[col * d + j]);
                    inv[r * d + j] = f.sub(inv[r * d + j], sub_i);
                }
            }
        }
        Ok(SquareMatrix {
            params: f,
            dim: d,
            entries: inv,
        })
    }

    /// Determinant mod p via Gaussian elimination; nonzero iff the matrix
    /// lies in `GL(d, F_p)`.
    pub fn det(&self) -> FieldElement {
        let f = self.params;
        let d = self.dim;
        let mut a = self.entries.clone();
        let mut det = FieldElement::ONE;
        let mut negate = false;

        for col in 0..d {
            let Some(pivot_row) = (col..d).find(|&r| !a[r * d + col].is_zero()) else {
                return FieldElement::ZERO;
            };
            if pivot_row != col {
                for j in 0..d {
                    a.swap(col * d + j, pivot_row * d + j);
                }
                negate = !negate;
            }
            let pivot = a[col * d + col];
            det = f.mul(det, pivot);
            let pivot_inv = f.inv(pivot).expect("pivot is nonzero");
            for r in (col + 1)..d {
                let factor = f.mul(a[r * d + col], pivot_inv);
                if factor.is_zero() {
                    continue;
                }
                for j in col..d {
                    let sub = f.mul(factor, a[col * d + j]);
                    a[r * d + j] = f.sub(a[r * d + j], sub);
                }
            }
        }
        if negate {
            f.neg(det)
        } else {
            det
        }
    }

    /// Trace (sum of diagonal entries).
    pub fn trace(&self) -> FieldElement {
        let f = self.params;
        (0..self.dim).fold(FieldElement::ZERO, |acc, i| {
            f.add(acc, self.entries[i * self.dim + i])
        })
    }
}

impl std::fmt::Display for SquareMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in 0..self.dim {
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{:>3}", self.get(i, j))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Conjugation `x^{-1} * m * x`.
pub fn conjugate(x: &SquareMatrix, m: &SquareMatrix) -> Result<SquareMatrix, MatError> {
    let x_inv = x.inverse()?;
    x_inv.mul(m)?.mul(x)
}

/// Group commutator `[a, b] = a^{-1} * b^{-1} * a * b`.
pub fn commutator(a: &SquareMatrix, b: &SquareMatrix) -> Result<SquareMatrix, MatError> {
    let a_inv = a.inverse()?;
    let b_inv = b.inverse()?;
    a_inv.mul(&b_inv)?.mul(a)?.mul(b)
}
