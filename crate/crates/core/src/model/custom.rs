//! Non-polynomial rate laws.
//!
//! A custom law factors as `α(x) = envelope(x) · gate(x)` with a polynomial
//! envelope and a gate in `[0, 1]`. Lumped sums over regions with more than
//! one state go through [`CustomRate::coarse_sum`]; single states use the
//! exact propensity.

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Signed;

use super::Species;
use crate::faulhaber;
use crate::polynomial::{format_rational, rational_to_f64, Polynomial};

pub trait CustomRate: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Call text as written in a model file, e.g. `saturating(17/10, M, P, 1/100)`.
    fn render(&self, species: &[Species]) -> String;

    /// Species-independent identity used for equality.
    fn signature(&self) -> String;

    fn propensity(&self, x: &[i64]) -> f64;

    /// Approximate `Σ_{x ∈ [lo, hi]} α(x)` for multi-state regions.
    fn coarse_sum(&self, lo: &[i64], hi: &[i64]) -> f64;

    fn envelope(&self) -> Polynomial;

    fn gate(&self, x: &[f64]) -> f64;

    /// Human-readable gate, e.g. `P/(P + 1/100)`.
    fn gate_display(&self, species: &[Species]) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub enum CustomArg {
    Number(BigRational),
    Species(usize),
}

/// `coef · x_factor · x_sat / (x_sat + k)`.
///
/// On multi-state regions the fraction is replaced by the indicator
/// `x_sat ≥ 1`, which is accurate when `k` is small. The fraction also has an
/// exact interval sum in terms of digamma functions; the indicator is used
/// because it stays a product of power sums.
#[derive(Debug, Clone)]
pub struct Saturating {
    nvars: usize,
    coef: BigRational,
    factor: usize,
    saturating: usize,
    k: BigRational,
    coef_f64: f64,
    k_f64: f64,
}

impl Saturating {
    pub fn new(
        nvars: usize,
        coef: BigRational,
        factor: usize,
        saturating: usize,
        k: BigRational,
    ) -> Result<Self, String> {
        if coef.is_negative() || !k.is_positive() {
            return Err("saturating law needs coef >= 0 and k > 0".into());
        }
        if factor >= nvars || saturating >= nvars {
            return Err("saturating law species index out of range".into());
        }
        Ok(Saturating {
            nvars,
            coef_f64: rational_to_f64(&coef),
            k_f64: rational_to_f64(&k),
            coef,
            factor,
            saturating,
            k,
        })
    }
}

impl CustomRate for Saturating {
    fn name(&self) -> &str {
        "saturating"
    }

    fn render(&self, species: &[Species]) -> String {
        format!(
            "saturating({}, {}, {}, {})",
            format_rational(&self.coef),
            species[self.factor].name,
            species[self.saturating].name,
            format_rational(&self.k)
        )
    }

    fn signature(&self) -> String {
        format!("saturating({},{},{},{})", self.coef, self.factor, self.saturating, self.k)
    }

    fn propensity(&self, x: &[i64]) -> f64 {
        let s = x[self.saturating] as f64;
        if s <= 0.0 {
            return 0.0;
        }
        self.coef_f64 * x[self.factor].max(0) as f64 * s / (s + self.k_f64)
    }

    fn coarse_sum(&self, lo: &[i64], hi: &[i64]) -> f64 {
        let active_lo = lo[self.saturating].max(1);
        if active_lo > hi[self.saturating] {
            return 0.0;
        }
        let mut acc = self.coef_f64;
        for i in 0..lo.len() {
            let w = if i == self.factor {
                let l = if i == self.saturating { active_lo } else { lo[i] };
                faulhaber::power_sum(1, l, hi[i]).to_f64()
            } else if i == self.saturating {
                (hi[i] - active_lo + 1) as f64
            } else {
                (hi[i] - lo[i] + 1) as f64
            };
            acc *= w;
        }
        acc
    }

    fn envelope(&self) -> Polynomial {
        Polynomial::variable(self.nvars, self.factor).scale(&self.coef)
    }

    fn gate(&self, x: &[f64]) -> f64 {
        let s = x[self.saturating];
        if s <= 0.0 {
            0.0
        } else {
            s / (s + self.k_f64)
        }
    }

    fn gate_display(&self, species: &[Species]) -> String {
        let s = &species[self.saturating].name;
        format!("{s}/({s} + {})", format_rational(&self.k))
    }
}

/// Instantiates a named custom law from parsed call arguments.
pub fn custom_law(name: &str, nvars: usize, args: &[CustomArg]) -> Result<Arc<dyn CustomRate>, String> {
    match name {
        "saturating" => match args {
            [CustomArg::Number(c), CustomArg::Species(f), CustomArg::Species(s), CustomArg::Number(k)] => {
                Ok(Arc::new(Saturating::new(nvars, c.clone(), *f, *s, k.clone())?))
            }
            _ => Err("saturating(coef, factor_species, saturating_species, k) expected".into()),
        },
        other => Err(format!("unknown rate law `{other}`")),
    }
}
