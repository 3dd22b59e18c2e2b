//! Key-space cardinality and security-level arithmetic.
//!
//! The headline figures use the literal `(p - 2)` choices-per-slot counting
//! (at the default platform: `249^32 ≈ 4.77e76 ≈ 2^255` for four matrices
//! of dimension 8), while the sampler actually enforces pairwise-distinct
//! eigenvalues. The report therefore also carries the exact
//! distinct-sampling count `∏ (p - 1 - i)` per matrix as a footnote, so the
//! two counting conventions stay visibly separate.

use num_bigint::BigUint;

use crate::field::FieldParams;

/// Brute-force search sizes and storage figures for one platform choice.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyspaceReport {
    pub dim: usize,
    pub prime: u64,
    pub matrices: u32,
    /// `(p - 2)^dim`: the literal per-matrix count.
    pub per_matrix_choices: BigUint,
    /// `per_matrix_choices^matrices`.
    pub total_cardinality: BigUint,
    /// `matrices * dim * log2(p - 2)`.
    pub classical_bits: f64,
    /// Half the classical level (square-root quantum search speedup).
    pub quantum_bits: f64,
    /// `dim^2 * ceil(log2(p))`.
    pub storage_bits_per_matrix: u64,
    /// `∏_{i=0}^{dim-1} (p - 1 - i)`: the exact count under
    /// distinct-eigenvalue sampling, reported as a footnote.
    pub distinct_per_matrix: BigUint,
}

/// Computes the key-space report for `matrices` diagonal-eigenvalue
/// matrices of dimension `dim` over `F_p`.
pub fn keyspace_report(dim: usize, params: FieldParams, matrices: u32) -> KeyspaceReport {
    let p = params.modulus();
    let per_matrix_choices = BigUint::from(p - 2).pow(dim as u32);
    let total_cardinality = per_matrix_choices.pow(matrices);
    let classical_bits = matrices as f64 * dim as f64 * ((p - 2) as f64).log2();
    let distinct_per_matrix = (0..dim as u64).map(|i| BigUint::from(p - 1 - i)).product();

    KeyspaceReport {
        dim,
        prime: p,
        matrices,
        per_matrix_choices,
        total_cardinality,
        classical_bits,
        quantum_bits: classical_bits / 2.0,
        storage_bits_per_matrix: storage_report(dim, params),
        distinct_per_matrix,
    }
}

/// Storage cost of one matrix in bits: `dim^2` entries at
/// `ceil(log2(p))` bits each (512 bits at `d = 8, p = 251`; 2048 at
/// `d = 16`).
pub fn storage_report(dim: usize, params: FieldParams) -> u64 {
    (dim as u64) * (dim as u64) * bit_length(params.modulus())
}

pub(crate) fn bit_length(p: u64) -> u64 {
    64 - p.leading_zeros() as u64
}

/// Rounds a big integer to three significant figures in scientific
/// notation, returning `(mantissa, exponent)` so that
/// `n ≈ mantissa * 10^exponent`.
pub fn scientific_3sf(n: &BigUint) -> (f64, i64) {
    let digits = n.to_str_radix(10);
    let mut exponent = digits.len() as i64 - 1;
    if digits == "0" {
        return (0.0, 0);
    }
    // round the leading four digits half-up to three
    let lead: u64 = digits
        .chars()
        .chain(std::iter::repeat('0'))
        .take(4)
        .collect::<String>()
        .parse()
        .expect("decimal digits");
    let mut mantissa3 = (lead + 5) / 10;
    if mantissa3 == 1000 {
        mantissa3 = 100;
        exponent += 1;
    }
    (mantissa3 as f64 / 100.0, exponent)
}

/// Formats a big integer as `m.mme±ee` with three significant figures,
/// e.g. `4.77e76`.
pub fn format_scientific(n: &BigUint) -> String {
    let (m, e) = scientific_3sf(n);
    format!("{m:.2}e{e}")
}
