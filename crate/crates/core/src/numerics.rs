//! Shared numeric primitives: exact combinatorics, exact rationals, and the
//! signed log-domain representation with compensated summation that the fast
//! distribution evaluator is built on.
//!
//! Everything here is pure and re-entrant. The memoized Stirling tables are
//! built once behind a [`OnceLock`] and are safe for concurrent reads.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::sync::OnceLock;

use crate::{Error, Result};

/// Arbitrary-precision rational number, always in lowest terms with a
/// positive denominator. Arithmetic on it never rounds.
pub type ExactRational = BigRational;

// ---------------------------------------------------------------------------
// Signed log-domain scalars and compensated summation
// ---------------------------------------------------------------------------

/// A real number stored as a sign and the natural log of its magnitude.
///
/// This representation keeps products of many small or large factors (powers,
/// binomial coefficients) well inside floating-point range; the alternating
/// sums built from such terms are then accumulated with [`signed_accumulate`].
/// Zero is represented by `sign = 0` (the log is then `-inf` by convention).
///
/// The log is carried as a high/low double pair: a single double cannot even
/// distinguish adjacent floats once `|ln x|` is in the hundreds (its ulp
/// there exceeds the 2e-16 spacing of the mantissa), so encode performs one
/// Newton correction in log space and keeps the residual. Decoding a value
/// encoded by [`SignedLogValue::from_f64`] recovers it to within a few ulp
/// (relative error ≤ 1e-15) across the whole finite range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLogValue {
    sign: i8,
    log_hi: f64,
    log_lo: f64,
}

impl SignedLogValue {
    /// Exact zero.
    pub const ZERO: SignedLogValue = SignedLogValue {
        sign: 0,
        log_hi: f64::NEG_INFINITY,
        log_lo: 0.0,
    };

    /// Builds a value `sign * exp(log_magnitude)`. A zero sign yields exact
    /// zero regardless of the log; nonzero signs are normalized to ±1.
    pub fn new(sign: i8, log_magnitude: f64) -> SignedLogValue {
        if sign == 0 || log_magnitude == f64::NEG_INFINITY {
            SignedLogValue::ZERO
        } else {
            SignedLogValue {
                sign: sign.signum(),
                log_hi: log_magnitude,
                log_lo: 0.0,
            }
        }
    }

    /// Encodes an ordinary float. `NaN` maps to zero sign with a NaN log,
    /// which downstream accumulation reports as unreliable.
    pub fn from_f64(x: f64) -> SignedLogValue {
        if x == 0.0 {
            return SignedLogValue::ZERO;
        }
        if x.is_nan() {
            return SignedLogValue {
                sign: 0,
                log_hi: f64::NAN,
                log_lo: 0.0,
            };
        }
        let sign = if x > 0.0 { 1 } else { -1 };
        let a = x.abs();
        let hi = a.ln();
        if !hi.is_finite() {
            // a = +inf
            return SignedLogValue {
                sign,
                log_hi: hi,
                log_lo: 0.0,
            };
        }
        // Newton residual: ln a = hi + ln(a e^{-hi}) ≈ hi + (a e^{-hi} - 1).
        // The square-root split keeps e^{-hi} away from overflow/subnormals.
        let ratio = if hi.abs() > 700.0 {
            let t = (-hi / 2.0).exp();
            (a * t) * t
        } else {
            a * (-hi).exp()
        };
        SignedLogValue {
            sign,
            log_hi: hi,
            log_lo: ratio - 1.0,
        }
    }

    /// Decodes back to an ordinary float. Magnitudes beyond floating-point
    /// range saturate to `±inf`; ones below it flush to `±0`.
    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            return if self.log_hi.is_nan() { f64::NAN } else { 0.0 };
        }
        let magnitude = if self.log_hi.abs() > 700.0 {
            let t = (self.log_hi / 2.0).exp();
            (t * (1.0 + self.log_lo)) * t
        } else {
            self.log_hi.exp() * (1.0 + self.log_lo)
        };
        f64::from(self.sign) * magnitude
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    /// Natural log of the magnitude; `-inf` when the value is zero.
    pub fn log_magnitude(self) -> f64 {
        self.log_hi + self.log_lo
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0 && !self.log_hi.is_nan()
    }
}

/// Result of [`signed_accumulate`].
#[derive(Clone, Copy, Debug)]
pub struct AccumulatedSum {
    /// The compensated floating-point sum.
    pub value: f64,
    /// `|value| / max|term|`, or 0 when every term is zero. Small ratios mean
    /// the sum is the residue of massive cancellation and has lost roughly
    /// `-log10(ratio)` of its significant digits.
    pub cancellation_ratio: f64,
    /// Cleared when the accumulation overflowed or produced non-finite
    /// intermediates; the value is then meaningless.
    pub reliable: bool,
}

/// Sums a sequence of signed log-domain terms in floating point using
/// second-order compensated accumulation (cascaded Kahan–Babuška–Neumaier:
/// each addition's rounding error is recovered exactly by a two-sum and fed
/// into a second compensated accumulator).
///
/// The result is deterministic for a given input order. Overflow does not
/// panic; it clears the `reliable` flag on the result instead.
pub fn signed_accumulate<I>(terms: I) -> AccumulatedSum
where
    I: IntoIterator<Item = SignedLogValue>,
{
    accumulate_f64(terms.into_iter().map(|term| term.to_f64()))
}

/// The same compensated accumulation over plain floating-point addends.
pub(crate) fn accumulate_f64<I>(values: I) -> AccumulatedSum
where
    I: IntoIterator<Item = f64>,
{
    let mut sum = 0.0f64;
    let mut comp = 0.0f64; // first-order error accumulator
    let mut comp2 = 0.0f64; // second-order error accumulator
    let mut max_abs = 0.0f64;
    let mut saw_nan = false;

    // Exact rounding error of one addition (Neumaier's branch of two-sum).
    fn two_sum(s: f64, x: f64) -> (f64, f64) {
        let t = s + x;
        let e = if s.abs() >= x.abs() {
            (s - t) + x
        } else {
            (x - t) + s
        };
        (t, e)
    }

    for x in values {
        if x == 0.0 {
            continue;
        }
        if x.is_nan() {
            saw_nan = true;
            continue;
        }
        let a = x.abs();
        if a > max_abs {
            max_abs = a;
        }
        let (t, e) = two_sum(sum, x);
        sum = t;
        let (t2, e2) = two_sum(comp, e);
        comp = t2;
        comp2 += e2;
    }

    let value = sum + comp + comp2;
    if max_abs == 0.0 {
        return AccumulatedSum {
            value: 0.0,
            cancellation_ratio: 0.0,
            reliable: !saw_nan,
        };
    }
    if saw_nan || !value.is_finite() || !max_abs.is_finite() {
        return AccumulatedSum {
            value,
            cancellation_ratio: 0.0,
            reliable: false,
        };
    }
    AccumulatedSum {
        value,
        cancellation_ratio: value.abs() / max_abs,
        reliable: true,
    }
}

/// Below this cancellation ratio a fast-mode sum has lost so many digits
/// that callers in auto mode switch to exact evaluation (double precision
/// keeps roughly ten significant digits at 1e-6).
pub const CANCELLATION_FALLBACK_RATIO: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Exact combinatorics
// ---------------------------------------------------------------------------

/// Binomial coefficient `C(n, k)` in arbitrary precision. Returns 0 when
/// `k < 0` or `k > n`.
pub fn binomial_coefficient(n: u64, k: i64) -> BigUint {
    if k < 0 || k as u64 > n {
        return BigUint::zero();
    }
    let mut k = k as u64;
    if k > n - k {
        k = n - k;
    }
    let mut acc = BigUint::one();
    for i in 0..k {
        // The running product C(n, i+1) stays integral at every step, so the
        // division is exact.
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `ln C(n, k)`, or `-inf` when `k > n`.
///
/// For small `min(k, n-k)` the log is a short sum of `ln` terms, which keeps
/// the absolute error tiny even when `n` is in the millions; otherwise it
/// falls back to log-gamma.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    if k <= 512 {
        let mut acc = 0.0f64;
        for i in 0..k {
            acc += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        acc
    } else {
        use statrs::function::gamma::ln_gamma;
        ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
    }
}

const STIRLING_MEMO_ROWS: usize = 65;

struct StirlingTables {
    /// `first[k][j]` = signed Stirling number of the first kind `s(k, j)`.
    first: Vec<Vec<BigInt>>,
    /// `second[m][k]` = Stirling number of the second kind `S(m, k)`.
    second: Vec<Vec<BigUint>>,
}

fn stirling_tables() -> &'static StirlingTables {
    static TABLES: OnceLock<StirlingTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut first: Vec<Vec<BigInt>> = Vec::with_capacity(STIRLING_MEMO_ROWS);
        first.push(vec![BigInt::one()]);
        for k in 1..STIRLING_MEMO_ROWS {
            first.push(next_stirling_first_row(&first[k - 1], k as u64 - 1));
        }
        let mut second: Vec<Vec<BigUint>> = Vec::with_capacity(STIRLING_MEMO_ROWS);
        second.push(vec![BigUint::one()]);
        for m in 1..STIRLING_MEMO_ROWS {
            second.push(next_stirling_second_row(&second[m - 1]));
        }
        StirlingTables { first, second }
    })
}

/// Row `k+1` of signed first-kind numbers from row `k`:
/// `s(k+1, j) = s(k, j-1) - k * s(k, j)` (coefficients of the falling
/// factorial extended by one factor).
fn next_stirling_first_row(row: &[BigInt], k: u64) -> Vec<BigInt> {
    let mut next = vec![BigInt::zero(); row.len() + 1];
    let kb = BigInt::from(k);
    for (j, value) in row.iter().enumerate() {
        next[j + 1] += value;
        next[j] -= &kb * value;
    }
    next
}

/// Row `m+1` of second-kind numbers from row `m`:
/// `S(m+1, k) = k * S(m, k) + S(m, k-1)`.
pub(crate) fn next_stirling_second_row(row: &[BigUint]) -> Vec<BigUint> {
    let mut next = vec![BigUint::zero(); row.len() + 1];
    for (k, value) in row.iter().enumerate() {
        next[k] += BigUint::from(k) * value;
        next[k + 1] += value;
    }
    next
}

/// `ln k!` as a short exact-ish sum (callers pass small `k`).
pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    if k <= 1024 {
        let mut acc = 0.0f64;
        for i in 2..=k {
            acc += (i as f64).ln();
        }
        acc
    } else {
        use statrs::function::gamma::ln_gamma;
        ln_gamma((k + 1) as f64)
    }
}

/// Natural log of a positive big integer, accurate to ~1 ulp relative even
/// when the value is far beyond floating-point range.
pub(crate) fn ln_biguint(x: &BigUint) -> f64 {
    debug_assert!(!x.is_zero());
    let bits = x.bits();
    if bits <= 63 {
        return (x.to_u64().unwrap() as f64).ln();
    }
    let shift = bits - 63;
    let top = (x >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Signed Stirling number of the first kind `s(k, j)`: the coefficients of
/// the falling factorial, `Σ_j s(k,j) x^j = x (x-1) ⋯ (x-k+1)`. Returns 0
/// outside `0 ≤ j ≤ k`; `s(0,0) = 1`.
pub fn stirling_first_signed(k: u64, j: u64) -> BigInt {
    if j > k {
        return BigInt::zero();
    }
    if (k as usize) < STIRLING_MEMO_ROWS {
        return stirling_tables().first[k as usize][j as usize].clone();
    }
    let mut row = stirling_tables().first[STIRLING_MEMO_ROWS - 1].clone();
    for kk in STIRLING_MEMO_ROWS as u64 - 1..k {
        row = next_stirling_first_row(&row, kk);
    }
    row[j as usize].clone()
}

/// Stirling number of the second kind `S(m, k)` (number of partitions of an
/// `m`-set into `k` nonempty blocks). Returns 0 for `k > m`; `S(k,k) = 1`.
pub fn stirling_second(m: u64, k: u64) -> BigUint {
    if k > m {
        return BigUint::zero();
    }
    if (m as usize) < STIRLING_MEMO_ROWS {
        return stirling_tables().second[m as usize][k as usize].clone();
    }
    let mut row = stirling_tables().second[STIRLING_MEMO_ROWS - 1].clone();
    for _ in STIRLING_MEMO_ROWS - 1..m as usize {
        row = next_stirling_second_row(&row);
    }
    row[k as usize].clone()
}

/// `base^exp` for big integers (square-and-multiply; `0^0 = 1`).
pub(crate) fn bigint_pow(base: &BigInt, exp: u64) -> BigInt {
    let mut result = BigInt::one();
    let mut square = base.clone();
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            result *= &square;
        }
        e >>= 1;
        if e > 0 {
            square = &square * &square;
        }
    }
    result
}

/// `base^exp` for exact rationals.
pub(crate) fn rational_pow(base: &ExactRational, exp: u64) -> ExactRational {
    ExactRational::new_raw(bigint_pow(base.numer(), exp), bigint_pow(base.denom(), exp))
}

// ---------------------------------------------------------------------------
// Exact rational plumbing
// ---------------------------------------------------------------------------

/// Parses an exact rational from `p/q`, integer, decimal, or scientific
/// notation. Decimals convert by place value (`0.95` → `19/20`, `1e-4` →
/// `1/10000`), never through floating point.
pub fn parse_exact_rational(s: &str) -> Result<ExactRational> {
    let err = || Error::ParseRational(s.to_string());
    let t = s.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((num, den)) = t.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| err())?;
        let den: BigInt = den.trim().parse().map_err(|_| err())?;
        if den.is_zero() {
            return Err(err());
        }
        return Ok(ExactRational::new(num, den));
    }

    // Decimal / scientific form: [sign] digits [. digits] [eE [sign] digits]
    let (mantissa, exponent) = match t.split_once(['e', 'E']) {
        Some((m, e)) => {
            let exp: i64 = e.parse().map_err(|_| err())?;
            (m, exp)
        }
        None => (t, 0i64),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(err());
    }
    let mut value: BigInt = if int_part.is_empty() {
        BigInt::zero()
    } else {
        int_part.parse().map_err(|_| err())?
    };
    let ten = BigInt::from(10u32);
    for b in frac_part.bytes() {
        value = value * &ten + BigInt::from(b - b'0');
    }
    let scale = exponent - frac_part.len() as i64;
    let rational = if scale >= 0 {
        ExactRational::from(value * bigint_pow(&ten, scale as u64))
    } else {
        ExactRational::new(value, bigint_pow(&ten, (-scale) as u64))
    };
    Ok(if sign < 0 { -rational } else { rational })
}

/// Interprets a float as the exact (dyadic) rational it stores. Errors on
/// NaN or infinities.
pub fn f64_to_exact(x: f64) -> Result<ExactRational> {
    ExactRational::from_float(x)
        .ok_or_else(|| Error::Domain(format!("{x} has no finite rational value")))
}

/// Converts an exact rational to the nearest double, safely even when the
/// numerator and denominator separately overflow floating-point range.
///
/// The quotient is first computed as a ~96-bit scaled integer, converted,
/// and rescaled in chunks, so the result is accurate to within an ulp or so
/// of the true value (values beyond range saturate to `±inf` / `±0`).
pub fn rational_to_f64(r: &ExactRational) -> f64 {
    if r.numer().is_zero() {
        return 0.0;
    }
    let negative = r.numer().is_negative();
    let numer = r.numer().magnitude();
    let denom = r.denom().magnitude();
    let shift = 96 - (numer.bits() as i64 - denom.bits() as i64);
    let quotient = if shift >= 0 {
        (numer << shift as u64) / denom
    } else {
        numer / (denom << (-shift) as u64)
    };
    let q = quotient.to_f64().unwrap_or(f64::INFINITY);
    let x = scale_by_pow2(q, -shift);
    if negative {
        -x
    } else {
        x
    }
}

/// `x * 2^e` without overflowing intermediate powers.
fn scale_by_pow2(mut x: f64, mut e: i64) -> f64 {
    const CHUNK: i64 = 500;
    while e > 0 {
        let step = e.min(CHUNK);
        x *= f64::powi(2.0, step as i32);
        if !x.is_finite() {
            return x;
        }
        e -= step;
    }
    while e < 0 {
        let step = (-e).min(CHUNK);
        x *= f64::powi(2.0, -(step as i32));
        if x == 0.0 {
            return x;
        }
        e += step;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::FromPrimitive;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // ---- binomial coefficients -------------------------------------------

    /// Independent oracle: Pascal's triangle built purely by addition.
    fn pascal_triangle(rows: usize) -> Vec<Vec<BigUint>> {
        let mut tri: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
        for n in 1..rows {
            let prev = &tri[n - 1];
            let mut row = vec![BigUint::one()];
            for k in 1..n {
                row.push(&prev[k - 1] + &prev[k]);
            }
            row.push(BigUint::one());
            tri.push(row);
        }
        tri
    }

    #[test]
    fn binomial_matches_pascal_recurrence_up_to_60() {
        let tri = pascal_triangle(61);
        for n in 0..=60u64 {
            for k in 0..=n {
                assert_eq!(
                    binomial_coefficient(n, k as i64),
                    tri[n as usize][k as usize],
                    "C({n},{k})"
                );
            }
        }
    }

    #[test]
    fn binomial_known_values_and_edges() {
        assert_eq!(binomial_coefficient(5, 2), BigUint::from(10u32));
        assert_eq!(binomial_coefficient(7, 0), BigUint::from(1u32));
        assert_eq!(binomial_coefficient(52, 5), BigUint::from(2_598_960u64));
        assert_eq!(binomial_coefficient(10, -1), BigUint::zero());
        assert_eq!(binomial_coefficient(10, 11), BigUint::zero());
        assert_eq!(binomial_coefficient(0, 0), BigUint::one());
        // C(100, 50) against the purely additive oracle.
        let tri = pascal_triangle(101);
        assert_eq!(binomial_coefficient(100, 50), tri[100][50]);
    }

    #[test]
    fn ln_binomial_tracks_exact_values() {
        for &(n, k) in &[
            (5u64, 2u64),
            (52, 5),
            (128, 64),
            (1000, 3),
            (1 << 24, 8),
            (2000, 997),
        ] {
            let exact = binomial_coefficient(n, k as i64);
            // ln of a BigUint via its bit length: value = top * 2^shift.
            let bits = exact.bits();
            let shift = bits.saturating_sub(64);
            let top = (&exact >> shift).to_f64().unwrap();
            let expected = top.ln() + shift as f64 * std::f64::consts::LN_2;
            let got = ln_binomial(n, k);
            assert!(
                (got - expected).abs() <= 1e-9 * expected.abs().max(1.0),
                "ln C({n},{k}): got {got}, expected {expected}"
            );
        }
        assert_eq!(ln_binomial(4, 9), f64::NEG_INFINITY);
        assert_eq!(ln_binomial(9, 0), 0.0);
    }

    // ---- Stirling numbers -------------------------------------------------

    /// Independent oracle: coefficients of x(x-1)...(x-k+1) by explicit
    /// polynomial multiplication.
    fn falling_factorial_coefficients(k: u64) -> Vec<BigInt> {
        let mut coeffs = vec![BigInt::one()]; // the empty product
        for i in 0..k {
            // multiply by (x - i)
            let mut next = vec![BigInt::zero(); coeffs.len() + 1];
            for (j, c) in coeffs.iter().enumerate() {
                next[j + 1] += c;
                next[j] -= BigInt::from(i) * c;
            }
            coeffs = next;
        }
        coeffs
    }

    /// Independent oracle: count set partitions of {0..m-1} into exactly k
    /// nonempty blocks by direct enumeration.
    fn count_partitions(m: usize, k: usize) -> u64 {
        fn recurse(element: usize, m: usize, blocks: &mut Vec<Vec<usize>>, k: usize) -> u64 {
            if element == m {
                return u64::from(blocks.len() == k);
            }
            let mut total = 0;
            for i in 0..blocks.len() {
                blocks[i].push(element);
                total += recurse(element + 1, m, blocks, k);
                blocks[i].pop();
            }
            blocks.push(vec![element]);
            total += recurse(element + 1, m, blocks, k);
            blocks.pop();
            total
        }
        recurse(0, m, &mut Vec::new(), k)
    }

    #[test]
    fn stirling_first_matches_falling_factorial_expansion() {
        for k in 0..=12u64 {
            let coeffs = falling_factorial_coefficients(k);
            for j in 0..=k {
                assert_eq!(
                    stirling_first_signed(k, j),
                    coeffs[j as usize],
                    "s({k},{j})"
                );
            }
            assert_eq!(stirling_first_signed(k, k + 1), BigInt::zero());
        }
    }

    #[test]
    fn stirling_first_known_values() {
        assert_eq!(stirling_first_signed(3, 2), BigInt::from(-3));
        assert_eq!(stirling_first_signed(3, 1), BigInt::from(2));
        assert_eq!(stirling_first_signed(0, 0), BigInt::one());
        for k in 0..=10u64 {
            assert_eq!(stirling_first_signed(k, k), BigInt::one());
        }
    }

    #[test]
    fn stirling_second_matches_partition_enumeration() {
        for m in 0..=9usize {
            for k in 0..=m {
                assert_eq!(
                    stirling_second(m as u64, k as u64),
                    BigUint::from(count_partitions(m, k)),
                    "S({m},{k})"
                );
            }
        }
    }

    #[test]
    fn stirling_second_known_values_and_edges() {
        assert_eq!(stirling_second(3, 2), BigUint::from(3u32));
        assert_eq!(stirling_second(4, 2), BigUint::from(7u32));
        assert_eq!(stirling_second(2, 5), BigUint::zero());
        assert_eq!(stirling_second(7, 7), BigUint::one());
    }

    #[test]
    fn stirling_orthogonality() {
        for k in 0..=12u64 {
            for l in 0..=k {
                let mut acc = BigInt::zero();
                for j in 0..=k {
                    acc += stirling_first_signed(k, j) * BigInt::from(stirling_second(j, l));
                }
                let expected = if k == l {
                    BigInt::one()
                } else {
                    BigInt::zero()
                };
                assert_eq!(acc, expected, "orthogonality at k={k}, l={l}");
            }
        }
    }

    #[test]
    fn stirling_second_reconstructs_powers() {
        for x in 1..=8u64 {
            for m in 0..=10u64 {
                let mut acc = BigUint::zero();
                for k in 0..=m {
                    // falling factorial x(x-1)...(x-k+1)
                    let mut falling = BigUint::one();
                    let mut defined = true;
                    for i in 0..k {
                        if i >= x {
                            defined = false;
                            break;
                        }
                        falling *= BigUint::from(x - i);
                    }
                    if defined {
                        acc += stirling_second(m, k) * falling;
                    }
                }
                assert_eq!(acc, bigint_pow(&BigInt::from(x), m).magnitude().clone());
            }
        }
    }

    #[test]
    fn stirling_beyond_memoized_rows() {
        // Recurrence consistency across the table boundary.
        let k = STIRLING_MEMO_ROWS as u64; // first non-memoized row
        for j in [0u64, 1, 5, k - 1, k] {
            let expected = if j == 0 {
                BigInt::zero()
            } else {
                stirling_first_signed(k - 1, j - 1)
                    - BigInt::from(k - 1) * stirling_first_signed(k - 1, j)
            };
            assert_eq!(stirling_first_signed(k, j), expected, "s({k},{j})");
        }
        for kk in [1u64, 7, k] {
            let expected =
                BigUint::from(kk) * stirling_second(k - 1, kk) + stirling_second(k - 1, kk - 1);
            assert_eq!(stirling_second(k, kk), expected, "S({k},{kk})");
        }
    }

    // ---- signed log values and accumulation -------------------------------

    #[test]
    fn accumulate_simple_cases() {
        let terms = [1.0f64, -1.0, 0.5].map(SignedLogValue::from_f64);
        let acc = signed_accumulate(terms);
        assert_eq!(acc.value, 0.5);
        assert_eq!(acc.cancellation_ratio, 0.5);
        assert!(acc.reliable);

        let empty = signed_accumulate(std::iter::empty());
        assert_eq!(empty.value, 0.0);
        assert_eq!(empty.cancellation_ratio, 0.0);
        assert!(empty.reliable);

        let zeros = signed_accumulate([SignedLogValue::ZERO; 3]);
        assert_eq!(zeros.value, 0.0);
        assert_eq!(zeros.cancellation_ratio, 0.0);
    }

    #[test]
    fn accumulate_overflow_is_flagged_not_fatal() {
        let huge = SignedLogValue::new(1, 1e6); // e^(1e6) overflows f64
        let acc = signed_accumulate([huge, SignedLogValue::new(-1, 1e6)]);
        assert!(!acc.reliable);
    }

    #[test]
    fn signed_log_round_trip_at_range_extremes() {
        for x in [
            f64::MIN_POSITIVE,
            f64::MAX,
            1.0,
            1.0 + f64::EPSILON,
            2.1423881584501435e179,
            3.4e-180,
            -f64::MAX,
            -7.1e-291,
        ] {
            let back = SignedLogValue::from_f64(x).to_f64();
            let rel = ((back - x) / x).abs();
            assert!(rel <= 1e-15, "x = {x:e}: rel = {rel:e}");
        }
    }

    #[test]
    fn accumulate_matches_exact_rational_oracle_on_random_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
        for trial in 0..4 {
            let terms: Vec<f64> = (0..10_000)
                .map(|_| {
                    let magnitude = (rng.random::<f64>() * 30.0 - 15.0).exp();
                    if rng.random::<bool>() {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect();
            let exact: ExactRational = terms
                .iter()
                .map(|&x| ExactRational::from_f64(x).unwrap())
                .sum();
            let acc = signed_accumulate(terms.iter().map(|&x| SignedLogValue::from_f64(x)));
            assert!(acc.reliable);
            let exact_f = rational_to_f64(&exact);
            if acc.cancellation_ratio >= CANCELLATION_FALLBACK_RATIO {
                let rel = (acc.value - exact_f).abs() / exact_f.abs().max(f64::MIN_POSITIVE);
                assert!(
                    rel <= 1e-12,
                    "trial {trial}: value {} vs exact {exact_f}, rel err {rel}",
                    acc.value
                );
            }
        }
    }

    #[test]
    fn accumulate_detects_total_cancellation() {
        // Terms of an alternating series whose true sum is ~1e-9 of the
        // largest term: ratio must report the digit loss.
        let terms = [1.0e9f64, -1.0e9 + 1.0];
        let acc = signed_accumulate(terms.map(SignedLogValue::from_f64));
        assert!(acc.cancellation_ratio < 1e-8);
    }

    proptest! {
        #[test]
        fn signed_log_round_trip(x in prop::num::f64::NORMAL) {
            let back = SignedLogValue::from_f64(x).to_f64();
            let rel = ((back - x) / x).abs();
            prop_assert!(rel <= 1e-15, "x = {x}, back = {back}, rel = {rel}");
        }

        #[test]
        fn signed_log_zero_and_sign(x in prop::num::f64::NORMAL) {
            let v = SignedLogValue::from_f64(x);
            prop_assert_eq!(v.sign(), if x > 0.0 { 1 } else { -1 });
            prop_assert!(!v.is_zero());
        }
    }

    #[test]
    fn signed_log_zero_representation() {
        assert!(SignedLogValue::from_f64(0.0).is_zero());
        assert_eq!(SignedLogValue::from_f64(0.0).to_f64(), 0.0);
        assert_eq!(SignedLogValue::ZERO.sign(), 0);
        assert_eq!(SignedLogValue::new(0, 3.0).to_f64(), 0.0);
        assert_eq!(SignedLogValue::new(5, f64::NEG_INFINITY).to_f64(), 0.0);
    }

    // ---- rational parsing and conversion -----------------------------------

    #[test]
    fn parse_rational_forms() {
        let r = |s: &str| parse_exact_rational(s).unwrap();
        assert_eq!(r("19/20"), ExactRational::new(19.into(), 20.into()));
        assert_eq!(r("0.95"), ExactRational::new(19.into(), 20.into()));
        assert_eq!(r("9.5e-1"), ExactRational::new(19.into(), 20.into()));
        assert_eq!(r("1e-4"), ExactRational::new(1.into(), 10_000.into()));
        assert_eq!(r("1"), ExactRational::from_integer(1.into()));
        assert_eq!(r("0"), ExactRational::zero());
        assert_eq!(r(".5"), ExactRational::new(1.into(), 2.into()));
        assert_eq!(r("-3/6"), ExactRational::new((-1).into(), 2.into()));
        assert_eq!(r("2.5e3"), ExactRational::from_integer(2500.into()));
        assert_eq!(r(" 1/3 "), ExactRational::new(1.into(), 3.into()));

        for bad in ["", "abc", "1/0", "1.2.3", "1e", "/3", "0x10", "½"] {
            assert!(parse_exact_rational(bad).is_err(), "should reject {bad:?}");
        }
    }

    #[test]
    fn rational_to_f64_ordinary_and_extreme() {
        let half = ExactRational::new(1.into(), 2.into());
        assert_eq!(rational_to_f64(&half), 0.5);
        assert_eq!(rational_to_f64(&ExactRational::zero()), 0.0);
        assert_eq!(
            rational_to_f64(&ExactRational::new((-3).into(), 4.into())),
            -0.75
        );

        // Huge numerator and denominator whose separate f64 conversions both
        // overflow; the quotient is exactly 2.
        let big = bigint_pow(&BigInt::from(10), 400);
        let ratio = ExactRational::new(&big * BigInt::from(2), big.clone());
        assert_eq!(rational_to_f64(&ratio), 2.0);

        // A value far below f64 range flushes to zero, far above saturates.
        let tiny = ExactRational::new(BigInt::one(), bigint_pow(&BigInt::from(2), 5000));
        assert_eq!(rational_to_f64(&tiny), 0.0);
        let giant = ExactRational::from_integer(bigint_pow(&BigInt::from(2), 5000));
        assert_eq!(rational_to_f64(&giant), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn rational_round_trips_dyadic_floats(x in prop::num::f64::NORMAL) {
            // Every finite f64 is an exact rational; converting back must be
            // bit-exact because no rounding can occur.
            let r = f64_to_exact(x).unwrap();
            prop_assert_eq!(rational_to_f64(&r), x);
        }
    }

    #[test]
    fn bigint_pow_matches_naive() {
        for base in -3i64..=3 {
            let b = BigInt::from(base);
            let mut acc = BigInt::one();
            for e in 0..=12u64 {
                assert_eq!(bigint_pow(&b, e), acc, "{base}^{e}");
                acc *= &b;
            }
        }
        assert_eq!(bigint_pow(&BigInt::zero(), 0), BigInt::one());
    }
}
