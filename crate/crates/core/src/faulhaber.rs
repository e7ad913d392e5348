//! Closed-form power sums `Σ_{x=lo}^{hi} x^p` via Faulhaber's formula.
//!
//! Coefficients are derived once from exact Bernoulli numbers and stored as
//! integer polynomials over a common denominator, so every power sum is an
//! exact integer. Evaluation runs in `i128` and falls back to `BigInt` when an
//! intermediate would overflow.

use std::sync::LazyLock;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Highest exponent supported by the precomputed table.
pub const MAX_DEGREE: u32 = 8;

/// `F_p(n) = Σ_{i=1}^{n} i^p = (Σ_k coeffs[k] n^k) / denom`.
#[derive(Debug, Clone)]
struct SumPolynomial {
    coeffs: Vec<BigInt>,
    coeffs_small: Vec<i128>,
    denom: BigInt,
    denom_small: i128,
}

static TABLE: LazyLock<Vec<SumPolynomial>> = LazyLock::new(|| {
    let bernoulli = bernoulli_plus(MAX_DEGREE as usize);
    (0..=MAX_DEGREE as usize)
        .map(|p| {
            // F_p(n) = 1/(p+1) Σ_{k=0}^{p} C(p+1, k) B_k^+ n^{p+1-k}
            let mut rational = vec![BigRational::zero(); p + 2];
            for (k, b) in bernoulli.iter().enumerate().take(p + 1) {
                let c = BigRational::from_integer(binomial(p as u64 + 1, k as u64));
                rational[p + 1 - k] = c * b / BigRational::from_integer(BigInt::from(p + 1));
            }
            let denom = rational.iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()));
            let coeffs: Vec<BigInt> =
                rational.iter().map(|r| (r * BigRational::from_integer(denom.clone())).to_integer()).collect();
            SumPolynomial {
                coeffs_small: coeffs.iter().map(|c| c.to_i128().unwrap()).collect(),
                denom_small: denom.to_i128().unwrap(),
                coeffs,
                denom,
            }
        })
        .collect()
});

fn binomial(n: u64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Bernoulli numbers with the `B_1 = +1/2` convention.
fn bernoulli_plus(max: usize) -> Vec<BigRational> {
    let mut b = vec![BigRational::zero(); max + 1];
    b[0] = BigRational::one();
    for m in 1..=max {
        let mut acc = BigRational::zero();
        for (k, bk) in b.iter().enumerate().take(m) {
            acc += BigRational::from_integer(binomial(m as u64 + 1, k as u64)) * bk;
        }
        b[m] = -acc / BigRational::from_integer(BigInt::from(m + 1));
    }
    if max >= 1 {
        b[1] = -b[1].clone();
    }
    b
}

/// An exact integer that stays in `i128` whenever possible.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactInt {
    Small(i128),
    Big(BigInt),
}

impl ExactInt {
    pub fn to_big(&self) -> BigInt {
        match self {
            ExactInt::Small(v) => BigInt::from(*v),
            ExactInt::Big(v) => v.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExactInt::Small(v) => *v as f64,
            ExactInt::Big(v) => v.to_f64().unwrap_or(f64::INFINITY),
        }
    }

    pub fn mul(&self, other: &ExactInt) -> ExactInt {
        if let (ExactInt::Small(a), ExactInt::Small(b)) = (self, other) {
            if let Some(v) = a.checked_mul(*b) {
                return ExactInt::Small(v);
            }
        }
        ExactInt::Big(self.to_big() * other.to_big())
    }

    pub fn add(&self, other: &ExactInt) -> ExactInt {
        if let (ExactInt::Small(a), ExactInt::Small(b)) = (self, other) {
            if let Some(v) = a.checked_add(*b) {
                return ExactInt::Small(v);
            }
        }
        ExactInt::Big(self.to_big() + other.to_big())
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ExactInt::Small(v) => *v == 0,
            ExactInt::Big(v) => v.is_zero(),
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            ExactInt::Small(v) => *v < 0,
            ExactInt::Big(v) => v.is_negative(),
        }
    }
}

fn prefix_sum_small(poly: &SumPolynomial, n: i128) -> Option<i128> {
    let mut acc: i128 = 0;
    for c in poly.coeffs_small.iter().rev() {
        acc = acc.checked_mul(n)?.checked_add(*c)?;
    }
    Some(acc / poly.denom_small)
}

fn prefix_sum_big(poly: &SumPolynomial, n: i128) -> BigInt {
    let n = BigInt::from(n);
    let mut acc = BigInt::zero();
    for c in poly.coeffs.iter().rev() {
        acc = acc * &n + c;
    }
    acc / &poly.denom
}

/// `Σ_{i=1}^{n} i^p` for `n ≥ 0`, `1 ≤ p ≤ MAX_DEGREE`.
fn prefix_sum(p: u32, n: i128) -> ExactInt {
    let poly = &TABLE[p as usize];
    match prefix_sum_small(poly, n) {
        Some(v) => ExactInt::Small(v),
        None => ExactInt::Big(prefix_sum_big(poly, n)),
    }
}

/// Exact `Σ_{x=lo}^{hi} x^p` with the convention `0^0 = 1`.
///
/// Returns zero for an empty range. Panics if `lo < 0` or `p > MAX_DEGREE`.
pub fn power_sum(p: u32, lo: i64, hi: i64) -> ExactInt {
    assert!(lo >= 0, "power sums are defined on nonnegative ranges");
    assert!(p <= MAX_DEGREE, "power sum degree {p} exceeds {MAX_DEGREE}");
    if hi < lo {
        return ExactInt::Small(0);
    }
    if p == 0 {
        return ExactInt::Small((hi - lo + 1) as i128);
    }
    let upper = prefix_sum(p, hi as i128);
    if lo <= 1 {
        return upper;
    }
    let lower = prefix_sum(p, lo as i128 - 1);
    match (&upper, &lower) {
        (ExactInt::Small(a), ExactInt::Small(b)) => ExactInt::Small(a - b),
        _ => ExactInt::Big(upper.to_big() - lower.to_big()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(p: u32, lo: i64, hi: i64) -> BigInt {
        (lo..=hi).map(|x| BigInt::from(x).pow(p)).sum()
    }

    #[test]
    fn matches_naive_summation() {
        for p in 0..=MAX_DEGREE {
            for lo in 0..6 {
                for hi in lo..lo + 25 {
                    assert_eq!(power_sum(p, lo, hi).to_big(), naive(p, lo, hi), "p={p} [{lo},{hi}]");
                }
            }
        }
    }

    #[test]
    fn worked_quadratic_example() {
        // Σ_{i=1}^{n} (i^2 - i) for n = 3 is (2·27 + 3·9 + 3)/6 - (9 + 3)/2 = 8
        let s2 = power_sum(2, 0, 3).to_f64();
        let s1 = power_sum(1, 0, 3).to_f64();
        assert_eq!(s2 - s1, 8.0);
    }

    #[test]
    fn large_ranges_switch_to_bigint() {
        let hi = 1i64 << 31;
        let s = power_sum(8, hi - 3, hi);
        assert!(matches!(s, ExactInt::Big(_)));
        assert_eq!(s.to_big(), naive(8, hi - 3, hi));
    }

    #[test]
    fn empty_range_is_zero() {
        assert!(power_sum(3, 5, 4).is_zero());
    }
}
