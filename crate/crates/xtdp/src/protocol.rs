//! The two-pass key-agreement engine over `GL(d, F_p)`, plus the legacy
//! single-pass variant kept for attack demonstrations.
//!
//! In the extended scheme each party publishes a triple of three-factor
//! products:
//!
//! ```text
//! initiator:  u = x0^-1 a1 x1   v = x1^-1 a2 x2   w = x2^-1 a3 x3
//! responder:  p = y0^-1 b1 y1   q = y1^-1 b2 y2   r = y2^-1 b3 y3
//! ```
//!
//! then exchanges tokens `t_A = a1 p a2 q a3 r` and `t_B = u b1 v b2 w b3`.
//! The six commutator restrictions collapse the tokens to `y0^-1 z y3` and
//! `x0^-1 z x3` with `z = a1 b1 a2 b2 a3 b3`, so both sides recover the same
//! session key `K = z` by stripping their own blinds:
//! `K = x0 t_B x3^-1 = y0 t_A y3^-1`.
//!
//! The legacy variant drops the outer blinds `x0, x3, y0, y3`: its outer
//! public pieces are two-factor (linear in the unknowns), which is exactly
//! the surface the decomposition attack in [`crate::cryptanalysis`] splits.

use thiserror::Error;

use crate::commutant::{
    conjugated_diag, sample_eigenvalues, BasisLabel, CommutantError, EigenBasis, EigenvalueVector,
};
use crate::field::FieldParams;
use crate::matrix::{MatError, SquareMatrix};
use crate::rng::MatrixRng;

/// Largest supported matrix dimension.
pub const MAX_DIM: usize = 64;

/// Which side of the exchange a value belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn counterpart(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::Initiator => write!(f, "initiator"),
            Role::Responder => write!(f, "responder"),
        }
    }
}

/// Which key-agreement variant produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    /// Two-pass scheme; every public piece is a three-factor product.
    Xtdp,
    /// Single-pass legacy scheme; outer pieces are two-factor products.
    LegacyTdp,
}

/// Errors raised by the protocol layer.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("field F_{p} too small for dimension {dim}: need p - 1 >= dim")]
    FieldTooSmall { p: u64, dim: usize },
    #[error("dimension {dim} outside the supported range 1..={MAX_DIM}")]
    UnsupportedDimension { dim: usize },
    #[error("token originated from {origin}, expected one from the counterpart")]
    WrongTokenOrigin { origin: Role },
    #[error("public triple originated from {origin}, expected one from the counterpart")]
    WrongTripleOrigin { origin: Role },
    #[error("value was produced by the {found:?} variant, expected {expected:?}")]
    ModeMismatch {
        expected: ProtocolMode,
        found: ProtocolMode,
    },
    #[error("step `{step}` is invalid in phase {phase:?}")]
    OutOfOrder {
        phase: SessionPhase,
        step: &'static str,
    },
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error(transparent)]
    Commutant(#[from] CommutantError),
}

/// The public one-time setup: field, dimension and the six eigenbases
/// `O, P, Q, R, S, T`. Immutable and freely shareable between sessions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicSetup {
    params: FieldParams,
    dim: usize,
    bases: [EigenBasis; 6],
}

impl PublicSetup {
    /// Reassembles a setup from six bases (e.g. received over the wire).
    /// The bases must arrive in label order `O, P, Q, R, S, T`.
    pub fn from_bases(
        params: FieldParams,
        dim: usize,
        bases: [EigenBasis; 6],
    ) -> Result<Self, ProtocolError> {
        check_platform(params, dim)?;
        for (i, b) in bases.iter().enumerate() {
            if b.label() != BasisLabel::ALL[i] {
                return Err(ProtocolError::Mat(MatError::BadShape(
                    "eigenbases must be ordered O, P, Q, R, S, T",
                )));
            }
            if b.dim() != dim {
                return Err(ProtocolError::Mat(MatError::DimMismatch {
                    left: dim,
                    right: b.dim(),
                }));
            }
            if b.matrix().params() != params {
                return Err(ProtocolError::Mat(MatError::FieldMismatch {
                    left: params.modulus(),
                    right: b.matrix().params().modulus(),
                }));
            }
        }
        Ok(PublicSetup { params, dim, bases })
    }

    pub fn params(&self) -> FieldParams {
        self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self, label: BasisLabel) -> &EigenBasis {
        &self.bases[label.index()]
    }

    pub fn bases(&self) -> &[EigenBasis; 6] {
        &self.bases
    }
}

fn check_platform(params: FieldParams, dim: usize) -> Result<(), ProtocolError> {
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(ProtocolError::UnsupportedDimension { dim });
    }
    if params.modulus() - 1 < dim as u64 {
        return Err(ProtocolError::FieldTooSmall {
            p: params.modulus(),
            dim,
        });
    }
    Ok(())
}

/// Generates a fresh public setup: six independent uniform invertible
/// eigenbases over the requested platform.
pub fn setup_public(
    rng: &mut MatrixRng,
    dim: usize,
    params: FieldParams,
) -> Result<PublicSetup, ProtocolError> {
    check_platform(params, dim)?;
    let bases = BasisLabel::ALL.map(|label| {
        EigenBasis::new(label, rng.invertible_matrix(params, dim))
            .expect("sampled basis is invertible")
    });
    Ok(PublicSetup { params, dim, bases })
}

/// Initiator private key: three commutant elements `a1, a2, a3`, three
/// commutant blinds `x1, x2, x3` and the free blind `x0`. The eigenvalue
/// vectors behind the commutant elements are retained for verification and
/// cryptanalysis; the wire layer never serializes any of this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InitiatorPrivate {
    pub a1: SquareMatrix,
    pub a2: SquareMatrix,
    pub a3: SquareMatrix,
    pub x0: SquareMatrix,
    pub x1: SquareMatrix,
    pub x2: SquareMatrix,
    pub x3: SquareMatrix,
    /// Diagonals of `a1, a2, a3` in bases `O, P, Q`.
    pub a_eigs: [EigenvalueVector; 3],
    /// Diagonals of `x1, x2, x3` in bases `R, S, T`.
    pub x_eigs: [EigenvalueVector; 3],
}

/// Responder private key, mirror of [`InitiatorPrivate`]: `b1, b2, b3` over
/// `R, S, T`, blinds `y0, y1, y2` over `O, P, Q` and the free blind `y3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponderPrivate {
    pub b1: SquareMatrix,
    pub b2: SquareMatrix,
    pub b3: SquareMatrix,
    pub y0: SquareMatrix,
    pub y1: SquareMatrix,
    pub y2: SquareMatrix,
    pub y3: SquareMatrix,
    /// Diagonals of `b1, b2, b3` in bases `R, S, T`.
    pub b_eigs: [EigenvalueVector; 3],
    /// Diagonals of `y0, y1, y2` in bases `O, P, Q`.
    pub y_eigs: [EigenvalueVector; 3],
}

/// A party's published triple, with enough construction metadata for the
/// cryptanalysis module to know the factor shape of each piece.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicTriple {
    pub first: SquareMatrix,
    pub second: SquareMatrix,
    pub third: SquareMatrix,
    pub origin: Role,
    pub mode: ProtocolMode,
}

impl PublicTriple {
    /// Number of private factors in each piece: `[3, 3, 3]` for the
    /// two-pass scheme, `[2, 3, 2]` for the legacy one.
    pub fn factor_counts(&self) -> [usize; 3] {
        match self.mode {
            ProtocolMode::Xtdp => [3, 3, 3],
            ProtocolMode::LegacyTdp => [2, 3, 2],
        }
    }

    pub fn pieces(&self) -> [&SquareMatrix; 3] {
        [&self.first, &self.second, &self.third]
    }
}

/// Second-pass exchanged value, algebraically `y0^-1 z y3` (initiator) or
/// `x0^-1 z x3` (responder).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub value: SquareMatrix,
    pub origin: Role,
}

/// The agreed session key `K = z = a1 b1 a2 b2 a3 b3`.
///
/// This is the raw matrix the scheme ends with; any real deployment would
/// hash it before use as key material.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionKey {
    pub value: SquareMatrix,
}

impl SessionKey {
    /// Checked constructor (the key must be invertible).
    pub fn new(value: SquareMatrix) -> Result<Self, MatError> {
        if value.det().is_zero() {
            return Err(MatError::Singular);
        }
        Ok(SessionKey { value })
    }
}

struct InitiatorParts {
    a_eigs: [EigenvalueVector; 3],
    x_eigs: [EigenvalueVector; 3],
    x0: SquareMatrix,
}

fn build_initiator(
    setup: &PublicSetup,
    parts: InitiatorParts,
) -> Result<(InitiatorPrivate, PublicTriple), ProtocolError> {
    let a1 = conjugated_diag(setup.basis(BasisLabel::O), &parts.a_eigs[0])?;
    let a2 = conjugated_diag(setup.basis(BasisLabel::P), &parts.a_eigs[1])?;
    let a3 = conjugated_diag(setup.basis(BasisLabel::Q), &parts.a_eigs[2])?;
    let x1 = conjugated_diag(setup.basis(BasisLabel::R), &parts.x_eigs[0])?;
    let x2 = conjugated_diag(setup.basis(BasisLabel::S), &parts.x_eigs[1])?;
    let x3 = conjugated_diag(setup.basis(BasisLabel::T), &parts.x_eigs[2])?;
    let x0 = parts.x0;

    let x0_inv = x0.inverse()?;
    let x1_inv = x1.inverse()?;
    let x2_inv = x2.inverse()?;
    let u = SquareMatrix::product(&[&x0_inv, &a1, &x1])?;
    let v = SquareMatrix::product(&[&x1_inv, &a2, &x2])?;
    let w = SquareMatrix::product(&[&x2_inv, &a3, &x3])?;

    let private = InitiatorPrivate {
        a1,
        a2,
        a3,
        x0,
        x1,
        x2,
        x3,
        a_eigs: parts.a_eigs,
        x_eigs: parts.x_eigs,
    };
    let public = PublicTriple {
        first: u,
        second: v,
        third: w,
        origin: Role::Initiator,
        mode: ProtocolMode::Xtdp,
    };
    Ok((private, public))
}

struct ResponderParts {
    b_eigs: [EigenvalueVector; 3],
    y_eigs: [EigenvalueVector; 3],
    y3: SquareMatrix,
}

fn build_responder(
    setup: &PublicSetup,
    parts: ResponderParts,
) -> Result<(ResponderPrivate, PublicTriple), ProtocolError> {
    let b1 = conjugated_diag(setup.basis(BasisLabel::R), &parts.b_eigs[0])?;
    let b2 = conjugated_diag(setup.basis(BasisLabel::S), &parts.b_eigs[1])?;
    let b3 = conjugated_diag(setup.basis(BasisLabel::T), &parts.b_eigs[2])?;
    let y0 = conjugated_diag(setup.basis(BasisLabel::O), &parts.y_eigs[0])?;
    let y1 = conjugated_diag(setup.basis(BasisLabel::P), &parts.y_eigs[1])?;
    let y2 = conjugated_diag(setup.basis(BasisLabel::Q), &parts.y_eigs[2])?;
    let y3 = parts.y3;

    let y0_inv = y0.inverse()?;
    let y1_inv = y1.inverse()?;
    let y2_inv = y2.inverse()?;
    let p = SquareMatrix::product(&[&y0_inv, &b1, &y1])?;
    let q = SquareMatrix::product(&[&y1_inv, &b2, &y2])?;
    let r = SquareMatrix::product(&[&y2_inv, &b3, &y3])?;

    let private = ResponderPrivate {
        b1,
        b2,
        b3,
        y0,
        y1,
        y2,
        y3,
        b_eigs: parts.b_eigs,
        y_eigs: parts.y_eigs,
    };
    let public = PublicTriple {
        first: p,
        second: q,
        third: r,
        origin: Role::Responder,
        mode: ProtocolMode::Xtdp,
    };
    Ok((private, public))
}

fn sample_three(rng: &mut MatrixRng, setup: &PublicSetup) -> [EigenvalueVector; 3] {
    [0; 3].map(|_| {
        sample_eigenvalues(rng, setup.dim(), setup.params()).expect("setup guarantees p - 1 >= dim")
    })
}

/// Initiator key generation: fresh private seven-tuple and the published
/// triple `(u, v, w)`.
pub fn initiator_keygen(
    rng: &mut MatrixRng,
    setup: &PublicSetup,
) -> (InitiatorPrivate, PublicTriple) {
    let a_eigs = sample_three(rng, setup);
    let x_eigs = sample_three(rng, setup);
    let x0 = rng.invertible_matrix(setup.params(), setup.dim());
    build_initiator(setup, InitiatorParts { a_eigs, x_eigs, x0 })
        .expect("honest sampling satisfies every precondition")
}

/// Responder key generation: mirror of [`initiator_keygen`], publishing
/// `(p, q, r)`.
pub fn responder_keygen(
    rng: &mut MatrixRng,
    setup: &PublicSetup,
) -> (ResponderPrivate, PublicTriple) {
    let b_eigs = sample_three(rng, setup);
    let y_eigs = sample_three(rng, setup);
    let y3 = rng.invertible_matrix(setup.params(), setup.dim());
    build_responder(setup, ResponderParts { b_eigs, y_eigs, y3 })
        .expect("honest sampling satisfies every precondition")
}

/// Deterministic initiator construction from explicit parts.
///
/// Diagnostic entry point: it does not enforce eigenvalue distinctness, so
/// degenerate fixtures (for example the all-ones vector) can be built.
pub fn initiator_keygen_from_parts(
    setup: &PublicSetup,
    a_eigs: [EigenvalueVector; 3],
    x_eigs: [EigenvalueVector; 3],
    x0: SquareMatrix,
) -> Result<(InitiatorPrivate, PublicTriple), ProtocolError> {
    for e in a_eigs.iter().chain(x_eigs.iter()) {
        if e.len() != setup.dim() {
            return Err(ProtocolError::Mat(MatError::DimMismatch {
                left: setup.dim(),
                right: e.len(),
            }));
        }
    }
    if x0.det().is_zero() {
        return Err(ProtocolError::Mat(MatError::Singular));
    }
    build_initiator(setup, InitiatorParts { a_eigs, x_eigs, x0 })
}

/// Deterministic responder construction from explicit parts; same contract
/// as [`initiator_keygen_from_parts`].
pub fn responder_keygen_from_parts(
    setup: &PublicSetup,
    b_eigs: [EigenvalueVector; 3],
    y_eigs: [EigenvalueVector; 3],
    y3: SquareMatrix,
) -> Result<(ResponderPrivate, PublicTriple), ProtocolError> {
    for e in b_eigs.iter().chain(y_eigs.iter()) {
        if e.len() != setup.dim() {
            return Err(ProtocolError::Mat(MatError::DimMismatch {
                left: setup.dim(),
                right: e.len(),
            }));
        }
    }
    if y3.det().is_zero() {
        return Err(ProtocolError::Mat(MatError::Singular));
    }
    build_responder(setup, ResponderParts { b_eigs, y_eigs, y3 })
}

fn expect_xtdp_from(triple: &PublicTriple, origin: Role) -> Result<(), ProtocolError> {
    if triple.mode != ProtocolMode::Xtdp {
        return Err(ProtocolError::ModeMismatch {
            expected: ProtocolMode::Xtdp,
            found: triple.mode,
        });
    }
    if triple.origin != origin {
        return Err(ProtocolError::WrongTripleOrigin {
            origin: triple.origin,
        });
    }
    Ok(())
}

/// Initiator token `t_A = a1 p a2 q a3 r`.
pub fn make_token_initiator(
    private: &InitiatorPrivate,
    responder_pub: &PublicTriple,
) -> Result<Token, ProtocolError> {
    expect_xtdp_from(responder_pub, Role::Responder)?;
    let value = SquareMatrix::product(&[
        &private.a1,
        &responder_pub.first,
        &private.a2,
        &responder_pub.second,
        &private.a3,
        &responder_pub.third,
    ])?;
    Ok(Token {
        value,
        origin: Role::Initiator,
    })
}

/// Responder token `t_B = u b1 v b2 w b3`.
pub fn make_token_responder(
    private: &ResponderPrivate,
    initiator_pub: &PublicTriple,
) -> Result<Token, ProtocolError> {
    expect_xtdp_from(initiator_pub, Role::Initiator)?;
    let value = SquareMatrix::product(&[
        &initiator_pub.first,
        &private.b1,
        &initiator_pub.second,
        &private.b2,
        &initiator_pub.third,
        &private.b3,
    ])?;
    Ok(Token {
        value,
        origin: Role::Responder,
    })
}

/// Initiator key derivation `K = x0 t_B x3^-1`.
pub fn derive_key_initiator(
    private: &InitiatorPrivate,
    responder_token: &Token,
) -> Result<SessionKey, ProtocolError> {
    if responder_token.origin != Role::Responder {
        return Err(ProtocolError::WrongTokenOrigin {
            origin: responder_token.origin,
        });
    }
    let x3_inv = private.x3.inverse()?;
    let value = SquareMatrix::product(&[&private.x0, &responder_token.value, &x3_inv])?;
    Ok(SessionKey { value })
}

/// Responder key derivation `K = y0 t_A y3^-1`.
pub fn derive_key_responder(
    private: &ResponderPrivate,
    initiator_token: &Token,
) -> Result<SessionKey, ProtocolError> {
    if initiator_token.origin != Role::Initiator {
        return Err(ProtocolError::WrongTokenOrigin {
            origin: initiator_token.origin,
        });
    }
    let y3_inv = private.y3.inverse()?;
    let value = SquareMatrix::product(&[&private.y0, &initiator_token.value, &y3_inv])?;
    Ok(SessionKey { value })
}

/// Legacy private key.
///
/// For the initiator `elems = (a1, a2, a3)` over bases `(O, P, Q)` and
/// `chain = (x1, x2)` over `(R, S)`; for the responder `elems = (b1, b2, b3)`
/// over `(R, S, T)` and `chain = (y1, y2)` over `(P, Q)`. The chain elements
/// link adjacent public pieces; there are no outer blinds, which is what
/// leaves the outer pieces two-factor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LegacyPrivate {
    pub role: Role,
    pub elems: [SquareMatrix; 3],
    pub chain: [SquareMatrix; 2],
    pub elem_eigs: [EigenvalueVector; 3],
    pub chain_eigs: [EigenvalueVector; 2],
}

/// Eigenbasis assignment for the legacy variant, mirroring the two-pass
/// table with the outer blinds removed.
pub fn legacy_bases(role: Role) -> ([BasisLabel; 3], [BasisLabel; 2]) {
    match role {
        Role::Initiator => (
            [BasisLabel::O, BasisLabel::P, BasisLabel::Q],
            [BasisLabel::R, BasisLabel::S],
        ),
        Role::Responder => (
            [BasisLabel::R, BasisLabel::S, BasisLabel::T],
            [BasisLabel::P, BasisLabel::Q],
        ),
    }
}

/// Legacy single-pass key generation.
///
/// Publishes `(e1 c1, c1^-1 e2 c2, c2^-1 e3)` where `e` are the commutant
/// elements and `c` the chain: the outer pieces have exactly two private
/// factors each.
pub fn tdp_legacy_keygen(
    rng: &mut MatrixRng,
    setup: &PublicSetup,
    role: Role,
) -> (LegacyPrivate, PublicTriple) {
    let (elem_labels, chain_labels) = legacy_bases(role);
    let elem_eigs = sample_three(rng, setup);
    let chain_eigs: [EigenvalueVector; 2] = [0; 2].map(|_| {
        sample_eigenvalues(rng, setup.dim(), setup.params()).expect("setup guarantees p - 1 >= dim")
    });

    let elems: [SquareMatrix; 3] = std::array::from_fn(|i| {
        conjugated_diag(setup.basis(elem_labels[i]), &elem_eigs[i]).expect("setup dims agree")
    });
    let chain: [SquareMatrix; 2] = std::array::from_fn(|i| {
        conjugated_diag(setup.basis(chain_labels[i]), &chain_eigs[i]).expect("setup dims agree")
    });

    let c1_inv = chain[0]
        .inverse()
        .expect("commutant elements are invertible");
    let c2_inv = chain[1]
        .inverse()
        .expect("commutant elements are invertible");
    let first = elems[0].mul(&chain[0]).expect("setup dims agree");
    let second = SquareMatrix::product(&[&c1_inv, &elems[1], &chain[1]]).expect("setup dims agree");
    let third = c2_inv.mul(&elems[2]).expect("setup dims agree");

    let private = LegacyPrivate {
        role,
        elems,
        chain,
        elem_eigs,
        chain_eigs,
    };
    let public = PublicTriple {
        first,
        second,
        third,
        origin: role,
        mode: ProtocolMode::LegacyTdp,
    };
    (private, public)
}

/// Legacy shared key: the initiator computes `a1 p a2 q a3 r`, the
/// responder `u b1 v b2 w b3`; both equal `a1 b1 a2 b2 a3 b3`.
pub fn tdp_legacy_shared_key(
    private: &LegacyPrivate,
    counterpart_pub: &PublicTriple,
) -> Result<SessionKey, ProtocolError> {
    if counterpart_pub.mode != ProtocolMode::LegacyTdp {
        return Err(ProtocolError::ModeMismatch {
            expected: ProtocolMode::LegacyTdp,
            found: counterpart_pub.mode,
        });
    }
    if counterpart_pub.origin != private.role.counterpart() {
        return Err(ProtocolError::WrongTripleOrigin {
            origin: counterpart_pub.origin,
        });
    }
    let [e1, e2, e3] = [&private.elems[0], &private.elems[1], &private.elems[2]];
    let [p1, p2, p3] = counterpart_pub.pieces();
    let value = match private.role {
        Role::Initiator => SquareMatrix::product(&[e1, p1, e2, p2, e3, p3])?,
        Role::Responder => SquareMatrix::product(&[p1, e1, p2, e2, p3, e3])?,
    };
    Ok(SessionKey { value })
}

/// Phases of the linear exchange automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionPhase {
    /// Keys not yet generated.
    Fresh,
    /// Own triple published; waiting for the peer's.
    KeysGenerated,
    /// Own token issued; waiting for the peer's.
    TokenIssued,
    /// Session key established.
    Established,
}

/// Per-party private state for one exchange.
#[derive(Debug, Clone)]
pub enum PartyPrivate {
    Initiator(InitiatorPrivate),
    Responder(ResponderPrivate),
}

/// One party's run of the two-pass exchange as an explicit state machine.
///
/// Steps must be taken in order (generate keys, feed the peer triple, feed
/// the peer token); replaying or skipping a phase is rejected. Private
/// material is sampled fresh per session and never reused.
#[derive(Debug)]
pub struct PartySession {
    role: Role,
    setup: PublicSetup,
    rng: MatrixRng,
    phase: SessionPhase,
    private: Option<PartyPrivate>,
    our_public: Option<PublicTriple>,
    our_token: Option<Token>,
    key: Option<SessionKey>,
}

impl PartySession {
    pub fn new(role: Role, setup: PublicSetup, rng: MatrixRng) -> Self {
        PartySession {
            role,
            setup,
            rng,
            phase: SessionPhase::Fresh,
            private: None,
            our_public: None,
            our_token: None,
            key: None,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn setup(&self) -> &PublicSetup {
        &self.setup
    }

    /// First pass: sample privates and return the triple to publish.
    pub fn generate_keys(&mut self) -> Result<PublicTriple, ProtocolError> {
        if self.phase != SessionPhase::Fresh {
            return Err(ProtocolError::OutOfOrder {
                phase: self.phase,
                step: "generate_keys",
            });
        }
        let public = match self.role {
            Role::Initiator => {
                let (private, public) = initiator_keygen(&mut self.rng, &self.setup);
                self.private = Some(PartyPrivate::Initiator(private));
                public
            }
            Role::Responder => {
                let (private, public) = responder_keygen(&mut self.rng, &self.setup);
                self.private = Some(PartyPrivate::Responder(private));
                public
            }
        };
        self.our_public = Some(public.clone());
        self.phase = SessionPhase::KeysGenerated;
        Ok(public)
    }

    /// Second pass: consume the peer triple and return our token. Tokens
    /// cannot exist before both triples do, which this ordering enforces.
    pub fn receive_peer_public(&mut self, peer: &PublicTriple) -> Result<Token, ProtocolError> {
        if self.phase != SessionPhase::KeysGenerated {
            return Err(ProtocolError::OutOfOrder {
                phase: self.phase,
                step: "receive_peer_public",
            });
        }
        let token = match self.private.as_ref().expect("set when keys generated") {
            PartyPrivate::Initiator(private) => make_token_initiator(private, peer)?,
            PartyPrivate::Responder(private) => make_token_responder(private, peer)?,
        };
        self.our_token = Some(token.clone());
        self.phase = SessionPhase::TokenIssued;
        Ok(token)
    }

    /// Final step: consume the peer token and derive the session key.
    pub fn receive_peer_token(&mut self, token: &Token) -> Result<SessionKey, ProtocolError> {
        if self.phase != SessionPhase::TokenIssued {
            return Err(ProtocolError::OutOfOrder {
                phase: self.phase,
                step: "receive_peer_token",
            });
        }
        let key = match self.private.as_ref().expect("set when keys generated") {
            PartyPrivate::Initiator(private) => derive_key_initiator(private, token)?,
            PartyPrivate::Responder(private) => derive_key_responder(private, token)?,
        };
        self.key = Some(key.clone());
        self.phase = SessionPhase::Established;
        Ok(key)
    }

    pub fn session_key(&self) -> Option<&SessionKey> {
        self.key.as_ref()
    }

    pub fn published_triple(&self) -> Option<&PublicTriple> {
        self.our_public.as_ref()
    }

    pub fn issued_token(&self) -> Option<&Token> {
        self.our_token.as_ref()
    }

    pub fn private(&self) -> Option<&PartyPrivate> {
        self.private.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commutant::verify_commutation_pairs;
    use crate::field::FieldElement;

    fn f(p: u64) -> FieldParams {
        FieldParams::new(p).unwrap()
    }

    fn small_setup(seed: u64) -> PublicSetup {
        let mut rng = MatrixRng::from_seed(seed);
        setup_public(&mut rng, 2, f(7)).unwrap()
    }

    /// Test oracle: the shared key computed directly from both privates.
    fn direct_z(alice: &InitiatorPrivate, bob: &ResponderPrivate) -> SquareMatrix {
        SquareMatrix::product(&[&alice.a1, &bob.b1, &alice.a2, &bob.b2, &alice.a3, &bob.b3])
            .unwrap()
    }

    #[test]
    fn setup_validates_platform() {
        let mut rng = MatrixRng::from_seed(0);
        assert!(setup_public(&mut rng, 8, f(251)).is_ok());
        assert!(setup_public(&mut rng, 2, f(7)).is_ok());
        assert_eq!(
            setup_public(&mut rng, 8, f(7)).unwrap_err(),
            ProtocolError::FieldTooSmall { p: 7, dim: 8 }
        );
        assert_eq!(
            setup_public(&mut rng, 65, f(251)).unwrap_err(),
            ProtocolError::UnsupportedDimension { dim: 65 }
        );
        assert_eq!(
            setup_public(&mut rng, 0, f(251)).unwrap_err(),
            ProtocolError::UnsupportedDimension { dim: 0 }
        );
    }

    #[test]
    fn degenerate_all_identity_run() {
        // all-ones eigenvalues and x0 = I make every public piece identity
        let setup = small_setup(1);
        let prm = setup.params();
        let ones = || EigenvalueVector::from_nonzero(vec![FieldElement::ONE; setup.dim()]).unwrap();
        let (private, public) = initiator_keygen_from_parts(
            &setup,
            [ones(), ones(), ones()],
            [ones(), ones(), ones()],
            SquareMatrix::identity(prm, setup.dim()),
        )
        .unwrap();
        let id = SquareMatrix::identity(prm, setup.dim());
        assert_eq!(public.first, id);
        assert_eq!(public.second, id);
        assert_eq!(public.third, id);
        assert_eq!(private.a1, id);

        // full degenerate run ends at K = I
        let (bob, bob_pub) = responder_keygen_from_parts(
            &setup,
            [ones(), ones(), ones()],
            [ones(), ones(), ones()],
            SquareMatrix::identity(prm, setup.dim()),
        )
        .unwrap();
        let t_a = make_token_initiator(&private, &bob_pub).unwrap();
        let t_b = make_token_responder(&bob, &public).unwrap();
        assert_eq!(t_a.value, id);
        let k_a = derive_key_initiator(&private, &t_b).unwrap();
        let k_b = derive_key_responder(&bob, &t_a).unwrap();
        assert_eq!(k_a.value, id);
        assert_eq!(k_b.value, id);
    }

    #[test]
    fn publics_match_direct_remultiplication() {
        let setup = small_setup(2);
        let mut rng = MatrixRng::from_seed(77);
        let (alice, pub_a) = initiator_keygen(&mut rng, &setup);

        let u =
            SquareMatrix::product(&[&alice.x0.inverse().unwrap(), &alice.a1, &alice.x1]).unwrap();
        let v =
            SquareMatrix::product(&[&alice.x1.inverse().unwrap(), &alice.a2, &alice.x2]).unwrap();
        let w =
            SquareMatrix::product(&[&alice.x2.inverse().unwrap(), &alice.a3, &alice.x3]).unwrap();
        assert_eq!(pub_a.first, u);
        assert_eq!(pub_a.second, v);
        assert_eq!(pub_a.third, w);
        assert_eq!(pub_a.factor_counts(), [3, 3, 3]);

        let (bob, pub_b) = responder_keygen(&mut rng, &setup);
        let p = SquareMatrix::product(&[&bob.y0.inverse().unwrap(), &bob.b1, &bob.y1]).unwrap();
        let q = SquareMatrix::product(&[&bob.y1.inverse().unwrap(), &bob.b2, &bob.y2]).unwrap();
        let r = SquareMatrix::product(&[&bob.y2.inverse().unwrap(), &bob.b3, &bob.y3]).unwrap();
        assert_eq!(pub_b.pieces(), [&p, &q, &r]);
    }

    #[test]
    fn honest_keygen_satisfies_commutation_pairs() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(3);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let (alice, _) = initiator_keygen(&mut rng, &setup);
        let (bob, _) = responder_keygen(&mut rng, &setup);
        let checks = verify_commutation_pairs(&setup, &alice, &bob);
        assert_eq!(checks.len(), 6);
        assert!(checks.iter().all(|c| c.holds), "checks: {checks:?}");
    }

    #[test]
    fn tampered_private_fails_its_pair() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(4);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let (alice, _) = initiator_keygen(&mut rng, &setup);
        let (mut bob, _) = responder_keygen(&mut rng, &setup);
        bob.y0 = rng.invertible_matrix(prm, 8);
        let checks = verify_commutation_pairs(&setup, &alice, &bob);
        assert!(!checks[0].holds, "replacing y0 must break [a1, y0]");
        assert!(checks[1..].iter().all(|c| c.holds));
    }

    #[test]
    fn scalars_always_commute() {
        // d = 1: every pair check passes trivially
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(5);
        let setup = setup_public(&mut rng, 1, prm).unwrap();
        let (alice, _) = initiator_keygen(&mut rng, &setup);
        let (bob, _) = responder_keygen(&mut rng, &setup);
        assert!(verify_commutation_pairs(&setup, &alice, &bob)
            .iter()
            .all(|c| c.holds));
    }

    #[test]
    fn tokens_factor_through_z() {
        let setup = small_setup(6);
        let mut rng = MatrixRng::from_seed(123);
        let (alice, pub_a) = initiator_keygen(&mut rng, &setup);
        let (bob, pub_b) = responder_keygen(&mut rng, &setup);

        let t_a = make_token_initiator(&alice, &pub_b).unwrap();
        let t_b = make_token_responder(&bob, &pub_a).unwrap();
        assert!(!t_a.value.det().is_zero());
        assert!(!t_b.value.det().is_zero());

        let z = direct_z(&alice, &bob);
        let t_a_expect = SquareMatrix::product(&[&bob.y0.inverse().unwrap(), &z, &bob.y3]).unwrap();
        let t_b_expect =
            SquareMatrix::product(&[&alice.x0.inverse().unwrap(), &z, &alice.x3]).unwrap();
        assert_eq!(t_a.value, t_a_expect);
        assert_eq!(t_b.value, t_b_expect);
    }

    #[test]
    fn keys_agree_and_equal_z() {
        for seed in 0..10u64 {
            let setup = small_setup(seed);
            let mut rng = MatrixRng::from_seed(seed ^ 0xABCD);
            let (alice, pub_a) = initiator_keygen(&mut rng, &setup);
            let (bob, pub_b) = responder_keygen(&mut rng, &setup);
            let t_a = make_token_initiator(&alice, &pub_b).unwrap();
            let t_b = make_token_responder(&bob, &pub_a).unwrap();
            let k_a = derive_key_initiator(&alice, &t_b).unwrap();
            let k_b = derive_key_responder(&bob, &t_a).unwrap();
            assert_eq!(k_a, k_b);
            assert_eq!(k_a.value, direct_z(&alice, &bob));
        }
    }

    #[test]
    fn wrong_token_origin_rejected() {
        let setup = small_setup(7);
        let mut rng = MatrixRng::from_seed(9);
        let (alice, pub_a) = initiator_keygen(&mut rng, &setup);
        let (bob, pub_b) = responder_keygen(&mut rng, &setup);
        let t_a = make_token_initiator(&alice, &pub_b).unwrap();
        let t_b = make_token_responder(&bob, &pub_a).unwrap();

        assert!(matches!(
            derive_key_initiator(&alice, &t_a),
            Err(ProtocolError::WrongTokenOrigin {
                origin: Role::Initiator
            })
        ));
        assert!(matches!(
            derive_key_responder(&bob, &t_b),
            Err(ProtocolError::WrongTokenOrigin {
                origin: Role::Responder
            })
        ));
        // feeding our own triple back is rejected as well
        assert!(matches!(
            make_token_initiator(&alice, &pub_a),
            Err(ProtocolError::WrongTripleOrigin { .. })
        ));
    }

    #[test]
    fn legacy_shape_and_agreement() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed(11);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let (alice, pub_a) = tdp_legacy_keygen(&mut rng, &setup, Role::Initiator);
        let (bob, pub_b) = tdp_legacy_keygen(&mut rng, &setup, Role::Responder);

        assert_eq!(pub_a.factor_counts(), [2, 3, 2]);
        // u really is the two-factor product a1 * x1
        assert_eq!(pub_a.first, alice.elems[0].mul(&alice.chain[0]).unwrap());
        assert_eq!(pub_b.first, bob.elems[0].mul(&bob.chain[0]).unwrap());

        let k_a = tdp_legacy_shared_key(&alice, &pub_b).unwrap();
        let k_b = tdp_legacy_shared_key(&bob, &pub_a).unwrap();
        assert_eq!(k_a, k_b);

        // equals the direct product a1 b1 a2 b2 a3 b3
        let z = SquareMatrix::product(&[
            &alice.elems[0],
            &bob.elems[0],
            &alice.elems[1],
            &bob.elems[1],
            &alice.elems[2],
            &bob.elems[2],
        ])
        .unwrap();
        assert_eq!(k_a.value, z);
    }

    #[test]
    fn legacy_small_field_agreement() {
        for seed in 0..5u64 {
            let setup = small_setup(seed + 40);
            let mut rng = MatrixRng::from_seed(seed);
            let (alice, pub_a) = tdp_legacy_keygen(&mut rng, &setup, Role::Initiator);
            let (bob, pub_b) = tdp_legacy_keygen(&mut rng, &setup, Role::Responder);
            assert_eq!(
                tdp_legacy_shared_key(&alice, &pub_b).unwrap(),
                tdp_legacy_shared_key(&bob, &pub_a).unwrap()
            );
        }
    }

    #[test]
    fn legacy_rejects_wrong_inputs() {
        let setup = small_setup(8);
        let mut rng = MatrixRng::from_seed(21);
        let (alice, pub_a) = tdp_legacy_keygen(&mut rng, &setup, Role::Initiator);
        assert!(matches!(
            tdp_legacy_shared_key(&alice, &pub_a),
            Err(ProtocolError::WrongTripleOrigin { .. })
        ));
        let (_, xtdp_pub) = responder_keygen(&mut rng, &setup);
        assert!(matches!(
            tdp_legacy_shared_key(&alice, &xtdp_pub),
            Err(ProtocolError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn state_machine_happy_path() {
        let setup = small_setup(9);
        let mut alice =
            PartySession::new(Role::Initiator, setup.clone(), MatrixRng::from_seed(100));
        let mut bob = PartySession::new(Role::Responder, setup, MatrixRng::from_seed(200));

        let pub_a = alice.generate_keys().unwrap();
        let pub_b = bob.generate_keys().unwrap();
        let t_a = alice.receive_peer_public(&pub_b).unwrap();
        let t_b = bob.receive_peer_public(&pub_a).unwrap();
        let k_a = alice.receive_peer_token(&t_b).unwrap();
        let k_b = bob.receive_peer_token(&t_a).unwrap();
        assert_eq!(k_a, k_b);
        assert_eq!(alice.phase(), SessionPhase::Established);
        assert_eq!(alice.session_key(), Some(&k_a));
    }

    #[test]
    fn state_machine_rejects_out_of_order_steps() {
        let setup = small_setup(10);
        let mut alice = PartySession::new(Role::Initiator, setup.clone(), MatrixRng::from_seed(1));
        let mut bob = PartySession::new(Role::Responder, setup, MatrixRng::from_seed(2));
        let pub_b = bob.generate_keys().unwrap();

        // cannot consume the peer triple before generating keys
        assert!(matches!(
            alice.receive_peer_public(&pub_b),
            Err(ProtocolError::OutOfOrder {
                phase: SessionPhase::Fresh,
                ..
            })
        ));

        let pub_a = alice.generate_keys().unwrap();
        // replaying key generation is rejected
        assert!(matches!(
            alice.generate_keys(),
            Err(ProtocolError::OutOfOrder {
                phase: SessionPhase::KeysGenerated,
                ..
            })
        ));

        let t_b = bob.receive_peer_public(&pub_a).unwrap();
        // cannot derive before issuing our own token
        assert!(matches!(
            alice.receive_peer_token(&t_b),
            Err(ProtocolError::OutOfOrder {
                phase: SessionPhase::KeysGenerated,
                ..
            })
        ));

        let _t_a = alice.receive_peer_public(&pub_b).unwrap();
        // replaying the triple step is rejected
        assert!(matches!(
            alice.receive_peer_public(&pub_b),
            Err(ProtocolError::OutOfOrder {
                phase: SessionPhase::TokenIssued,
                ..
            })
        ));

        let k_a = alice.receive_peer_token(&t_b).unwrap();
        assert!(!k_a.value.det().is_zero());
        // and so is replaying the token step
        assert!(matches!(
            alice.receive_peer_token(&t_b),
            Err(ProtocolError::OutOfOrder {
                phase: SessionPhase::Established,
                ..
            })
        ));
    }

    #[test]
    fn sessions_resample_private_material() {
        let setup = small_setup(11);
        let mut rng = MatrixRng::from_seed(55);
        let (first, _) = initiator_keygen(&mut rng, &setup);
        let (second, _) = initiator_keygen(&mut rng, &setup);
        assert_ne!(first, second, "fresh sessions must not reuse privates");
    }
}
