//! Sparse multivariate polynomials with exact rational coefficients.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::faulhaber::{self, ExactInt};

pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponents, BigRational>,
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| r.numer().to_f64().unwrap_or(f64::NAN) / r.denom().to_f64().unwrap_or(f64::NAN))
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: BigRational) -> Self {
        let mut p = Polynomial::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn one(nvars: usize) -> Self {
        Polynomial::constant(nvars, BigRational::one())
    }

    pub fn variable(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        let mut p = Polynomial::zero(nvars);
        p.add_term(e, BigRational::one());
        p
    }

    /// The falling-factorial binomial `C(x_var, k) = x(x-1)...(x-k+1)/k!`.
    pub fn binomial(nvars: usize, var: usize, k: u32) -> Self {
        let x = Polynomial::variable(nvars, var);
        let mut acc = Polynomial::one(nvars);
        let mut fact = BigInt::one();
        for i in 0..k {
            let shifted = &x - &Polynomial::constant(nvars, BigRational::from_integer(BigInt::from(i)));
            acc = &acc * &shifted;
            fact *= BigInt::from(i + 1);
        }
        acc.scale(&BigRational::new(BigInt::one(), fact))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, exps: Exponents, coeff: BigRational) {
        debug_assert_eq!(exps.len(), self.nvars);
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry(exps).or_insert_with(BigRational::zero);
        *entry += coeff;
        if entry.is_zero() {
            self.terms.retain(|_, c| !c.is_zero());
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &BigRational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exps: &[u32]) -> BigRational {
        self.terms.get(exps).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Returns the constant value if the polynomial has no variable terms.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&d| d == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn degree_in(&self, var: usize) -> u32 {
        self.terms.keys().map(|e| e[var]).max().unwrap_or(0)
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn max_axis_degree(&self) -> u32 {
        (0..self.nvars).map(|v| self.degree_in(v)).max().unwrap_or(0)
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        let mut out = Polynomial::zero(self.nvars);
        for (e, k) in &self.terms {
            out.add_term(e.clone(), k * c);
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Polynomial::one(self.nvars);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Substitutes `x_i -> x_i + shift_i`.
    pub fn shift(&self, shift: &[i64]) -> Self {
        let n = self.nvars;
        let linear: Vec<Polynomial> = (0..n)
            .map(|i| {
                &Polynomial::variable(n, i)
                    + &Polynomial::constant(n, BigRational::from_integer(BigInt::from(shift[i])))
            })
            .collect();
        let mut out = Polynomial::zero(n);
        for (e, c) in &self.terms {
            let mut term = Polynomial::constant(n, c.clone());
            for (i, &d) in e.iter().enumerate() {
                if d > 0 {
                    term = &term * &linear[i].pow(d);
                }
            }
            out = &out + &term;
        }
        out
    }

    /// Partial derivative with respect to `var`.
    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[var] == 0 {
                continue;
            }
            let mut ne = e.clone();
            ne[var] -= 1;
            out.add_term(ne, c * BigRational::from_integer(BigInt::from(e[var])));
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mono: f64 = e.iter().zip(x).map(|(&d, &xi)| if d == 0 { 1.0 } else { xi.powi(d as i32) }).product();
                rational_to_f64(c) * mono
            })
            .sum()
    }

    pub fn eval_exact(&self, x: &[i64]) -> BigRational {
        let mut acc = BigRational::zero();
        for (e, c) in &self.terms {
            let mut mono = BigInt::one();
            for (&d, &xi) in e.iter().zip(x) {
                mono *= BigInt::from(xi).pow(d);
            }
            acc += c * BigRational::from_integer(mono);
        }
        acc
    }

    /// True when every coefficient is `<= 0`, i.e. the polynomial is
    /// nonpositive on the nonnegative orthant.
    pub fn all_coefficients_nonpositive(&self) -> bool {
        self.terms.values().all(|c| !c.is_positive())
    }

    pub fn all_coefficients_nonnegative(&self) -> bool {
        self.terms.values().all(|c| !c.is_negative())
    }

    /// Compiles the polynomial for exact interval sums.
    pub fn power_sum_form(&self) -> PowerSumForm {
        PowerSumForm::new(self)
    }

    pub fn display_with<'a>(&'a self, names: &'a [String]) -> PolynomialDisplay<'a> {
        PolynomialDisplay { poly: self, names }
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &rhs.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(&-BigRational::one())
    }
}

pub fn format_rational(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub struct PolynomialDisplay<'a> {
    poly: &'a Polynomial,
    names: &'a [String],
}

impl fmt::Display for PolynomialDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.poly.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.poly.terms.iter().enumerate() {
            let neg = c.is_negative();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { "-" } else { "+" })?;
            }
            let mag = c.abs();
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || e.iter().all(|&d| d == 0) {
                let s = format_rational(&mag);
                factors.push(if mag.is_integer() { s } else { format!("({s})") });
            }
            for (i, &d) in e.iter().enumerate() {
                match d {
                    0 => {}
                    1 => factors.push(self.names[i].clone()),
                    _ => factors.push(format!("{}^{}", self.names[i], d)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

/// Integer form `Σ_k numer_k Π_i x_i^{e_ki} / denom` used for exact
/// interval sums `Σ_{x ∈ [lo, hi]} p(x)` via per-axis power sums.
#[derive(Debug, Clone)]
pub struct PowerSumForm {
    terms: Vec<(ExactInt, Exponents)>,
    denom: f64,
}

impl PowerSumForm {
    fn new(poly: &Polynomial) -> Self {
        let denom = poly.terms.values().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let terms = poly
            .terms
            .iter()
            .map(|(e, c)| {
                let numer = (c * BigRational::from_integer(denom.clone())).to_integer();
                let numer = match numer.to_i128() {
                    Some(v) => ExactInt::Small(v),
                    None => ExactInt::Big(numer),
                };
                (numer, e.clone())
            })
            .collect();
        PowerSumForm { terms, denom: denom.to_f64().unwrap_or(f64::INFINITY) }
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.iter().flat_map(|(_, e)| e.iter().copied()).max().unwrap_or(0)
    }

    /// Exact numerator of the interval sum; divide by `denom()` for the value.
    pub fn sum_numerator(&self, lo: &[i64], hi: &[i64]) -> ExactInt {
        let mut acc = ExactInt::Small(0);
        for (numer, e) in &self.terms {
            let mut prod = numer.clone();
            for (i, &d) in e.iter().enumerate() {
                prod = prod.mul(&faulhaber::power_sum(d, lo[i], hi[i]));
                if prod.is_zero() {
                    break;
                }
            }
            acc = acc.add(&prod);
        }
        acc
    }

    pub fn denom(&self) -> f64 {
        self.denom
    }

    pub fn sum_over(&self, lo: &[i64], hi: &[i64]) -> f64 {
        self.sum_numerator(lo, hi).to_f64() / self.denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn binomial_expansion() {
        let p = Polynomial::binomial(1, 0, 2);
        assert_eq!(p.coefficient(&[2]), r(1, 2));
        assert_eq!(p.coefficient(&[1]), r(-1, 2));
        assert_eq!(p.eval(&[3.0]), 3.0);
    }

    #[test]
    fn shift_matches_pointwise_evaluation() {
        let x = Polynomial::variable(2, 0);
        let y = Polynomial::variable(2, 1);
        let p = &(&x * &x) + &(&x * &y).scale(&r(3, 1));
        let q = p.shift(&[1, -2]);
        for (a, b) in [(0, 0), (3, 5), (7, 2)] {
            let lhs = q.eval_exact(&[a, b]);
            let rhs = p.eval_exact(&[a + 1, b - 2]);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn interval_sum_matches_enumeration() {
        let x = Polynomial::variable(2, 0);
        let y = Polynomial::variable(2, 1);
        let p = &(&(&x * &x) * &y).scale(&r(7, 10)) - &y.scale(&r(1, 3));
        let form = p.power_sum_form();
        let (lo, hi) = ([2, 0], [9, 4]);
        let mut naive = BigRational::zero();
        for a in lo[0]..=hi[0] {
            for b in lo[1]..=hi[1] {
                naive += p.eval_exact(&[a, b]);
            }
        }
        let got = form.sum_over(&lo, &hi);
        let want = rational_to_f64(&naive);
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn display_is_readable() {
        let names = vec!["A".to_string(), "B".to_string()];
        let a = Polynomial::variable(2, 0);
        let p = &(&a * &a) - &Polynomial::constant(2, r(1, 2));
        assert_eq!(p.display_with(&names).to_string(), "-(1/2) + A^2");
    }
}
