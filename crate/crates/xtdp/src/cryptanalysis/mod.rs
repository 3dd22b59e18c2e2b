//! Desk-scale cryptanalysis harnesses.
//!
//! Three tools live here:
//!
//! - [`decompose`]: a rank-1 multiplicative decomposition solver that splits
//!   a two-factor product over two public commutant algebras. It recovers
//!   the factors of the legacy scheme's outer public pieces and returns
//!   `Inconsistent` on the three-factor pieces of the two-pass scheme —
//!   the linear/quadratic asymmetry that motivates the extended protocol.
//!   This is deliberately the simplest solver exploiting the public
//!   eigenbases, not a full algebraic-span attack.
//! - [`game`]: an interactive challenge-response distinguishing game. A
//!   pluggable distinguisher is shown the real session key next to an
//!   equally-shaped random matrix and must tell them apart; the harness
//!   reports its empirical advantage over guessing.
//! - [`uniformity`]: chi-square goodness-of-fit testing of matrix entries
//!   against the uniform distribution on `[0, p)`, used to probe whether
//!   session keys are statistically distinguishable from random matrices.
//!
//! None of this certifies security: the game and the uniformity runs produce
//! property-based evidence only.

pub mod decompose;
pub mod game;
pub mod uniformity;

pub use decompose::{
    attack_asymmetry_experiment, rank1_decompose, tdp_piece_attack_demo, AsymmetryOutcome,
    AttackReport, CryptanalysisError, Decomposition, DecompositionInstance, Inconsistent,
    PieceAttack,
};
pub use game::{
    coin_flip_distinguisher, d1_game, entry_frequency_distinguisher, planted_oracle_distinguisher,
    Challenge, GameTranscript, SessionSource, SessionTranscript,
};
pub use uniformity::{
    chi_square_survival, chi_square_uniformity, session_key_uniformity_experiment, ChiSquare,
    SessionKeySampler, StatsError, UniformityExperiment,
};
