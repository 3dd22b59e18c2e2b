//! Chi-square goodness-of-fit testing of matrix entries against the uniform
//! distribution on `[0, p)`, plus a sampler for session keys.
//!
//! The p-value comes from the chi-square survival function with `p - 1`
//! degrees of freedom, evaluated through the regularized incomplete gamma
//! function (series expansion below `a + 1`, Lentz continued fraction
//! above).

use rayon::prelude::*;
use thiserror::Error;

use crate::commutant::{conjugated_diag, sample_eigenvalues, BasisLabel};
use crate::field::FieldParams;
use crate::matrix::SquareMatrix;
use crate::protocol::PublicSetup;
use crate::rng::MatrixRng;

/// Errors raised by the statistical harness.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StatsError {
    /// Too few pooled entries for the test to mean anything (the expected
    /// count per bin should be at least 5).
    #[error("{pooled} pooled entries, need at least {needed} (5 per residue class)")]
    InsufficientSamples { pooled: usize, needed: usize },
    /// The sample matrices disagree on their field.
    #[error("samples must all live over the same field")]
    MixedParams,
}

/// Outcome of one goodness-of-fit test.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: u64,
    pub pooled_entries: usize,
}

/// Chi-square statistic of pooled matrix entries against uniform, without
/// the validity threshold (used by distinguishers scoring single matrices).
pub(crate) fn chi_square_statistic(samples: &[SquareMatrix]) -> f64 {
    let p = samples[0].params().modulus() as usize;
    let mut counts = vec![0u64; p];
    let mut pooled = 0usize;
    for m in samples {
        for e in m.entries() {
            counts[e.value() as usize] += 1;
        }
        pooled += m.entries().len();
    }
    let expected = pooled as f64 / p as f64;
    counts
        .iter()
        .map(|&c| {
            let diff = c as f64 - expected;
            diff * diff / expected
        })
        .sum()
}

/// Tests pooled entries of `samples` for uniformity over `[0, p)`.
///
/// Requires at least `5 * p` pooled entries; returns the statistic and its
/// survival-function p-value at `p - 1` degrees of freedom.
pub fn chi_square_uniformity(
    samples: &[SquareMatrix],
    params: FieldParams,
) -> Result<ChiSquare, StatsError> {
    if samples.iter().any(|m| m.params() != params) {
        return Err(StatsError::MixedParams);
    }
    let pooled: usize = samples.iter().map(|m| m.entries().len()).sum();
    let needed = 5 * params.modulus() as usize;
    if pooled < needed {
        return Err(StatsError::InsufficientSamples { pooled, needed });
    }
    let statistic = chi_square_statistic(samples);
    let dof = params.modulus() - 1;
    Ok(ChiSquare {
        statistic,
        p_value: chi_square_survival(statistic, dof as f64),
        dof,
        pooled_entries: pooled,
    })
}

/// Survival function of the chi-square distribution:
/// `P(X > stat)` for `X ~ chi2(dof)`.
pub fn chi_square_survival(stat: f64, dof: f64) -> f64 {
    if stat <= 0.0 {
        return 1.0;
    }
    regularized_gamma_q(dof / 2.0, stat / 2.0)
}

// Lanczos approximation (g = 7, 9 terms); coefficients as published.
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        return std::f64::consts::PI.ln()
            - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Lower regularized incomplete gamma `P(a, x)` by series expansion.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..500 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// Upper regularized incomplete gamma `Q(a, x)` by Lentz's continued
/// fraction; valid for `x > a + 1`.
fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

/// Samples matrices with the exact distribution of honest session keys.
///
/// The agreed key is `z = a1 b1 a2 b2 a3 b3`: the blinds cancel, so the key
/// is determined by the six commutant elements alone. Drawing those
/// directly (over their assigned bases `O, R, P, S, Q, T`) reproduces the
/// key distribution at a fraction of a full exchange's cost.
#[derive(Debug, Clone)]
pub struct SessionKeySampler<'a> {
    setup: &'a PublicSetup,
}

impl<'a> SessionKeySampler<'a> {
    pub fn new(setup: &'a PublicSetup) -> Self {
        SessionKeySampler { setup }
    }

    /// One session key.
    pub fn sample(&self, rng: &mut MatrixRng) -> SquareMatrix {
        let s = self.setup;
        let draw = |rng: &mut MatrixRng, label: BasisLabel| {
            let eig = sample_eigenvalues(rng, s.dim(), s.params())
                .expect("setup guarantees p - 1 >= dim");
            conjugated_diag(s.basis(label), &eig).expect("setup dims agree")
        };
        // initiator draws a1, a2, a3; responder draws b1, b2, b3
        let a1 = draw(rng, BasisLabel::O);
        let a2 = draw(rng, BasisLabel::P);
        let a3 = draw(rng, BasisLabel::Q);
        let b1 = draw(rng, BasisLabel::R);
        let b2 = draw(rng, BasisLabel::S);
        let b3 = draw(rng, BasisLabel::T);
        SquareMatrix::product(&[&a1, &b1, &a2, &b2, &a3, &b3]).expect("setup dims agree")
    }

    /// `n` keys, one derived generator per key for reproducible parallelism.
    pub fn sample_many(&self, n: usize, master_seed: u64, stream_base: u64) -> Vec<SquareMatrix> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = MatrixRng::from_seed_stream(master_seed, stream_base + i);
                self.sample(&mut rng)
            })
            .collect()
    }
}

/// Repeated-run summary: how often the uniformity test declined to reject.
#[derive(Debug, Clone)]
pub struct UniformityExperiment {
    pub runs: usize,
    pub keys_per_run: usize,
    pub significance: f64,
    pub non_rejections: usize,
    pub p_values: Vec<f64>,
}

/// Runs `runs` independent experiments, each testing `keys_per_run` fresh
/// session keys for entry uniformity at the given significance level.
pub fn session_key_uniformity_experiment(
    setup: &PublicSetup,
    runs: usize,
    keys_per_run: usize,
    significance: f64,
    master_seed: u64,
) -> Result<UniformityExperiment, StatsError> {
    let sampler = SessionKeySampler::new(setup);
    let p_values = (0..runs as u64)
        .into_par_iter()
        .map(|run| {
            let keys =
                sampler.sample_many(keys_per_run, master_seed, 1 + run * keys_per_run as u64);
            chi_square_uniformity(&keys, setup.params()).map(|c| c.p_value)
        })
        .collect::<Result<Vec<f64>, StatsError>>()?;
    let non_rejections = p_values.iter().filter(|&&p| p >= significance).count();
    Ok(UniformityExperiment {
        runs,
        keys_per_run,
        significance,
        non_rejections,
        p_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::setup_public;

    fn f(p: u64) -> FieldParams {
        FieldParams::new(p).unwrap()
    }

    fn rel_close(got: f64, want: f64, tol: f64) -> bool {
        (got - want).abs() <= tol * want.abs().max(1e-300)
    }

    #[test]
    fn survival_function_matches_reference_values() {
        // frozen from an independent implementation of the chi-square
        // survival function
        let cases = [
            (2.417_910_447_761_194, 3.0, 0.490_309_306_965_388),
            (250.0, 250.0, 0.488_105_320_047_829),
            (300.0, 250.0, 0.016_518_273_157_868_7),
            (123.5, 250.0, 0.999_999_999_998_937),
            (6.634_896_601_021_21, 1.0, 0.01),
            (0.5, 5.0, 0.992_123_293_232_63),
            (1000.0, 250.0, 2.955_138_295_353_49e-90),
        ];
        for (stat, dof, want) in cases {
            let got = chi_square_survival(stat, dof);
            assert!(
                rel_close(got, want, 1e-9),
                "sf({stat}, {dof}) = {got}, want {want}"
            );
        }
        assert_eq!(chi_square_survival(0.0, 5.0), 1.0);
    }

    #[test]
    fn uniform_entries_pass_and_vary() {
        // under the null hypothesis p-values should spread over (0, 1)
        let prm = f(251);
        let mut lows = 0;
        let mut highs = 0;
        for seed in 0..40u64 {
            let mut rng = MatrixRng::from_seed(seed);
            let samples: Vec<SquareMatrix> = (0..25).map(|_| rng.uniform_matrix(prm, 8)).collect();
            let out = chi_square_uniformity(&samples, prm).unwrap();
            assert!(out.pooled_entries == 1600 && out.dof == 250);
            if out.p_value < 0.5 {
                lows += 1;
            } else {
                highs += 1;
            }
        }
        assert!(
            lows >= 5 && highs >= 5,
            "p-values look degenerate: {lows} low / {highs} high"
        );
    }

    #[test]
    fn constant_samples_are_rejected_hard() {
        let prm = f(251);
        let samples: Vec<SquareMatrix> = (0..25).map(|_| SquareMatrix::zeros(prm, 8)).collect();
        let out = chi_square_uniformity(&samples, prm).unwrap();
        assert!(out.p_value < 1e-12, "p-value {} should be ~0", out.p_value);
    }

    #[test]
    fn insufficient_samples_rejected() {
        let prm = f(251);
        let samples = vec![SquareMatrix::zeros(prm, 8); 2]; // 128 entries < 1255
        assert_eq!(
            chi_square_uniformity(&samples, prm),
            Err(StatsError::InsufficientSamples {
                pooled: 128,
                needed: 1255
            })
        );
        assert!(chi_square_uniformity(&[], prm).is_err());
    }

    #[test]
    fn mixed_params_rejected() {
        let a = SquareMatrix::zeros(f(251), 8);
        let b = SquareMatrix::zeros(f(7), 8);
        assert_eq!(
            chi_square_uniformity(&[a, b], f(251)),
            Err(StatsError::MixedParams)
        );
    }

    #[test]
    fn sampler_matches_session_key_shape() {
        let prm = f(251);
        let mut rng = MatrixRng::from_seed_stream(5, 0);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let sampler = SessionKeySampler::new(&setup);
        let keys = sampler.sample_many(10, 5, 1);
        assert_eq!(keys.len(), 10);
        for k in &keys {
            assert_eq!(k.dim(), 8);
            assert!(!k.det().is_zero(), "session keys are invertible");
        }
        // reproducible
        assert_eq!(keys, sampler.sample_many(10, 5, 1));
    }

    #[test]
    fn session_keys_look_uniform() {
        // repeated experiments on 1000 keys each must decline to reject
        // uniformity at least 98% of the time
        let prm = f(251);
        let mut rng = MatrixRng::from_seed_stream(33, 0);
        let setup = setup_public(&mut rng, 8, prm).unwrap();
        let runs = 25;
        let out = session_key_uniformity_experiment(&setup, runs, 1000, 0.01, 33).unwrap();
        assert_eq!(out.runs, runs);
        assert!(
            out.non_rejections * 50 >= runs * 49,
            "non-rejections {}/{runs} below 98%; p-values {:?}",
            out.non_rejections,
            out.p_values
        );
    }
}
