//! The interactive distinguishing game.
//!
//! Per trial the harness runs one honest two-pass session, then shows a
//! distinguisher the real session key next to a uniformly random invertible
//! matrix of the same shape, in random order, along with the public
//! transcript. The distinguisher guesses which candidate is the key; the
//! transcript records its empirical advantage `|correct/trials - 1/2| * 2`.
//!
//! Trials are independent and run in parallel; every trial derives its
//! generators from the master seed plus the trial index, so outcomes do not
//! depend on scheduling.

use rayon::prelude::*;

use crate::matrix::SquareMatrix;
use crate::protocol::{
    derive_key_initiator, initiator_keygen, make_token_initiator, make_token_responder,
    responder_keygen, PublicSetup, PublicTriple, Token,
};
use crate::rng::MatrixRng;

/// Public transcript of one honest session: everything an eavesdropper saw.
#[derive(Debug, Clone)]
pub struct SessionTranscript {
    pub initiator_public: PublicTriple,
    pub responder_public: PublicTriple,
    pub initiator_token: Token,
    pub responder_token: Token,
}

/// One challenge shown to a distinguisher.
///
/// `secret_hint` is `None` in every honest game; the harness fills it with
/// the real key only when run in sanity mode, so that a deliberately
/// cheating distinguisher can confirm the wiring awards advantage 1.
#[derive(Debug)]
pub struct Challenge<'a> {
    pub trial_index: u64,
    pub candidates: [&'a SquareMatrix; 2],
    pub transcript: &'a SessionTranscript,
    pub secret_hint: Option<&'a SquareMatrix>,
}

/// Result of a game run.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTranscript {
    pub trials: usize,
    pub guesses_correct: usize,
    /// `|guesses_correct / trials - 1/2| * 2`, in `[0, 1]`.
    pub advantage: f64,
}

/// Source of honest sessions under a fixed public setup.
#[derive(Debug, Clone)]
pub struct SessionSource {
    setup: PublicSetup,
    master_seed: u64,
}

// Per-trial stream layout under the master seed. Stream 0 is left to the
// setup by convention.
const STREAMS_PER_TRIAL: u64 = 4;

impl SessionSource {
    pub fn new(setup: PublicSetup, master_seed: u64) -> Self {
        SessionSource { setup, master_seed }
    }

    pub fn setup(&self) -> &PublicSetup {
        &self.setup
    }

    fn trial_rng(&self, trial: u64, lane: u64) -> MatrixRng {
        MatrixRng::from_seed_stream(self.master_seed, STREAMS_PER_TRIAL * trial + lane + 1)
    }

    /// Runs one honest session and returns its transcript and key.
    fn run_trial(&self, trial: u64) -> (SessionTranscript, SquareMatrix) {
        let mut init_rng = self.trial_rng(trial, 0);
        let mut resp_rng = self.trial_rng(trial, 1);

        let (alice, pub_a) = initiator_keygen(&mut init_rng, &self.setup);
        let (bob, pub_b) = responder_keygen(&mut resp_rng, &self.setup);
        let t_a = make_token_initiator(&alice, &pub_b).expect("honest run");
        let t_b = make_token_responder(&bob, &pub_a).expect("honest run");
        let key = derive_key_initiator(&alice, &t_b).expect("honest run");

        (
            SessionTranscript {
                initiator_public: pub_a,
                responder_public: pub_b,
                initiator_token: t_a,
                responder_token: t_b,
            },
            key.value,
        )
    }
}

/// Plays `trials` rounds of the distinguishing game.
///
/// With `expose_secret` set, each challenge carries the real key in
/// `secret_hint` — strictly a harness sanity mode, never part of an honest
/// measurement.
pub fn d1_game<D>(
    distinguisher: D,
    trials: usize,
    source: &SessionSource,
    expose_secret: bool,
) -> GameTranscript
where
    D: Fn(&Challenge) -> usize + Sync,
{
    let guesses_correct = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let (transcript, key) = source.run_trial(trial);
            let mut decoy_rng = source.trial_rng(trial, 2);
            let decoy = decoy_rng.invertible_matrix(source.setup.params(), source.setup.dim());
            let mut coin_rng = source.trial_rng(trial, 3);
            let real_index = usize::from(coin_rng.coin());

            let candidates = if real_index == 0 {
                [&key, &decoy]
            } else {
                [&decoy, &key]
            };
            let challenge = Challenge {
                trial_index: trial,
                candidates,
                transcript: &transcript,
                secret_hint: expose_secret.then_some(&key),
            };
            usize::from(distinguisher(&challenge).min(1) == real_index)
        })
        .sum();

    GameTranscript {
        trials,
        guesses_correct,
        advantage: advantage(guesses_correct, trials),
    }
}

fn advantage(correct: usize, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    (correct as f64 / trials as f64 - 0.5).abs() * 2.0
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Guesses by a seeded coin flip, ignoring the challenge content entirely.
pub fn coin_flip_distinguisher(seed: u64) -> impl Fn(&Challenge) -> usize + Sync {
    move |c| (splitmix64(seed ^ c.trial_index.wrapping_mul(0xA5A5A5A5A5A5A5A5)) & 1) as usize
}

/// Guesses the candidate whose entry-frequency chi-square statistic sits
/// closer to its expected mean — a real (if feeble) statistical test. If
/// session keys carried entry bias this would show a measurable advantage.
pub fn entry_frequency_distinguisher() -> impl Fn(&Challenge) -> usize + Sync {
    |c| {
        let p = c.candidates[0].params().modulus();
        let dof = (p - 1) as f64;
        let score = |m: &SquareMatrix| {
            (super::uniformity::chi_square_statistic(std::slice::from_ref(m)) - dof).abs()
        };
        if score(c.candidates[0]) <= score(c.candidates[1]) {
            0
        } else {
            1
        }
    }
}

/// Cheats: reads the planted secret and points at it. Only meaningful when
/// the game runs with `expose_secret`; used to verify the harness wiring.
pub fn planted_oracle_distinguisher() -> impl Fn(&Challenge) -> usize + Sync {
    |c| match c.secret_hint {
        Some(secret) => usize::from(c.candidates[1] == secret),
        None => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldParams;
    use crate::protocol::setup_public;

    fn source(seed: u64, dim: usize, p: u64) -> SessionSource {
        let mut rng = MatrixRng::from_seed_stream(seed, 0);
        let setup = setup_public(&mut rng, dim, FieldParams::new(p).unwrap()).unwrap();
        SessionSource::new(setup, seed)
    }

    // 3 sigma of the advantage of an unbiased guesser over n trials
    fn three_sigma(trials: usize) -> f64 {
        3.0 / (trials as f64).sqrt()
    }

    #[test]
    fn coin_flip_has_no_advantage() {
        let src = source(1, 4, 251);
        let t = d1_game(coin_flip_distinguisher(99), 600, &src, false);
        assert_eq!(t.trials, 600);
        assert!(t.guesses_correct <= t.trials);
        assert!(
            t.advantage <= three_sigma(600),
            "advantage {} beyond 3 sigma",
            t.advantage
        );
    }

    #[test]
    fn constant_distinguisher_has_no_advantage() {
        // ignores its input entirely; the random presentation order alone
        // keeps it at chance level
        let src = source(2, 4, 251);
        let t = d1_game(|_| 0, 600, &src, false);
        assert!(t.advantage <= three_sigma(600), "advantage {}", t.advantage);
    }

    #[test]
    fn entry_frequency_test_has_no_advantage() {
        let src = source(3, 8, 251);
        let t = d1_game(entry_frequency_distinguisher(), 400, &src, false);
        assert!(t.advantage <= three_sigma(400), "advantage {}", t.advantage);
    }

    #[test]
    fn planted_oracle_wins_in_sanity_mode() {
        let src = source(4, 4, 251);
        let t = d1_game(planted_oracle_distinguisher(), 100, &src, true);
        assert_eq!(t.guesses_correct, 100);
        assert!(t.advantage > 0.99);
    }

    #[test]
    fn oracle_without_hint_is_blind() {
        let src = source(5, 4, 251);
        let t = d1_game(planted_oracle_distinguisher(), 400, &src, false);
        assert!(t.advantage <= three_sigma(400), "advantage {}", t.advantage);
    }

    #[test]
    fn game_is_reproducible_and_parallel_safe() {
        let src = source(6, 4, 251);
        let a = d1_game(coin_flip_distinguisher(7), 200, &src, false);
        let b = d1_game(coin_flip_distinguisher(7), 200, &src, false);
        assert_eq!(a, b);
    }

    #[test]
    fn transcript_is_public_data_only() {
        // the challenge hands out triples and tokens, never privates; check
        // the candidates are the only place the key could hide
        let src = source(7, 2, 7);
        let t = d1_game(
            |c: &Challenge| {
                assert!(c.secret_hint.is_none());
                assert_eq!(
                    c.candidates[0].dim(),
                    c.transcript.initiator_public.first.dim()
                );
                0
            },
            10,
            &src,
            false,
        );
        assert_eq!(t.trials, 10);
    }
}
