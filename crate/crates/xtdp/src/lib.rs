//! Key agreement over the general linear group `GL(d, F_p)`.
//!
//! The crate implements a two-pass key-agreement scheme in which every
//! public value is a three-factor matrix product (so no public equation is
//! linear in the unknowns), together with:
//!
//! - the legacy single-pass variant whose outer public pieces are two-factor
//!   products, kept for attack demonstrations and comparison;
//! - a conjugation cipher over the full matrix monoid, with its similarity
//!   leakage documented and tested;
//! - a rank-1 multiplicative decomposition solver that splits the legacy
//!   two-factor pieces over their public commutant algebras and fails on the
//!   three-factor ones;
//! - distinguishing-game and chi-square uniformity harnesses for the
//!   statistical claims;
//! - key-space cardinality reporting and a framed TCP handshake demo.

pub mod cipher;
pub mod commutant;
pub mod cryptanalysis;
pub mod field;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod protocol;
pub mod rng;
pub mod wire;

pub use cipher::{bcsp_decrypt, bcsp_encrypt, decrypt_bytes, encrypt_bytes, Ciphertext};
pub use commutant::{
    conjugated_diag, sample_eigenvalues, verify_commutation_pairs, BasisLabel, CommutantError,
    EigenBasis, EigenvalueVector,
};
pub use field::{FieldElement, FieldError, FieldParams};
pub use matrix::{commutator, conjugate, MatError, SquareMatrix};
pub use net::{HandshakeConfig, NetError, SessionSummary};
pub use protocol::{
    derive_key_initiator, derive_key_responder, initiator_keygen, make_token_initiator,
    make_token_responder, responder_keygen, setup_public, tdp_legacy_keygen, tdp_legacy_shared_key,
    InitiatorPrivate, LegacyPrivate, PartySession, ProtocolError, ProtocolMode, PublicSetup,
    PublicTriple, ResponderPrivate, Role, SessionKey, SessionPhase, Token,
};
pub use rng::MatrixRng;
