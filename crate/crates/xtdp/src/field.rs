//! Arithmetic in the prime field `F_p`, the scalar layer under every matrix
//! operation in this crate.
//!
//! Elements are kept as canonical residues in `[0, p)` at all times; there is
//! no lazy reduction, so equality is plain integer equality.

use thiserror::Error;

/// Errors raised by field construction and inversion.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum FieldError {
    /// The requested modulus is not a prime in the supported range.
    #[error("modulus {0} is not a prime in 3..2^32")]
    InvalidModulus(u64),
    /// Zero has no multiplicative inverse.
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// A canonical residue in `[0, p)`.
///
/// Construction goes through [`FieldParams::element`] (or an operation on
/// already-canonical values), which is what maintains the canonical-range
/// invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for FieldElement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The prime modulus defining one instance of `F_p`.
///
/// The default platform uses `p = 251`. Primality is checked once at
/// construction; all arithmetic methods are then total on canonical inputs
/// (inversion excepted, which rejects zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldParams {
    p: u64,
}

/// Largest supported modulus (exclusive). Setup-time primality checking is
/// deterministic below this bound; larger primes are out of scope.
pub const MAX_MODULUS: u64 = 1 << 32;

impl FieldParams {
    /// Builds the field `F_p`, verifying that `p` is a prime in `3..2^32`.
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if !(3..MAX_MODULUS).contains(&p) || !is_prime(p) {
            return Err(FieldError::InvalidModulus(p));
        }
        Ok(FieldParams { p })
    }

    #[inline]
    pub fn modulus(self) -> u64 {
        self.p
    }

    /// Reduces an arbitrary integer to its canonical residue.
    #[inline]
    pub fn element(self, v: u64) -> FieldElement {
        FieldElement(v % self.p)
    }

    #[inline]
    pub fn add(self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 + b.0;
        FieldElement(if s >= self.p { s - self.p } else { s })
    }

    #[inline]
    pub fn sub(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(if a.0 >= b.0 {
            a.0 - b.0
        } else {
            self.p - (b.0 - a.0)
        })
    }

    #[inline]
    pub fn neg(self, a: FieldElement) -> FieldElement {
        FieldElement(if a.0 == 0 { 0 } else { self.p - a.0 })
    }

    #[inline]
    pub fn mul(self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u128 * b.0 as u128) % self.p as u128) as u64)
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inv(self, a: FieldElement) -> Result<FieldElement, FieldError> {
        if a.0 == 0 {
            return Err(FieldError::ZeroInverse);
        }
        // Bezout coefficients stay below p in magnitude, so i64 suffices
        // for p < 2^32.
        let (mut r0, mut r1) = (self.p as i64, a.0 as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1, "modulus is prime, so gcd(a, p) = 1");
        let t = if t0 < 0 { t0 + self.p as i64 } else { t0 };
        Ok(FieldElement(t as u64))
    }

    /// Square-and-multiply exponentiation.
    pub fn pow(self, a: FieldElement, mut e: u64) -> FieldElement {
        let mut base = a;
        let mut acc = FieldElement::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

/// Deterministic trial-division primality test, adequate for the supported
/// modulus range (n < 2^32).
fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}
