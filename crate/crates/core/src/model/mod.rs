//! Reaction-network models: species, reactions, rate laws and their
//! propensities.

mod custom;
mod parser;
mod printer;

use std::fmt;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::Signed;

use crate::polynomial::{rational_to_f64, Polynomial, PowerSumForm};

pub use custom::{custom_law, CustomArg, CustomRate, Saturating};
pub use parser::parse_model;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("undefined {kind} `{name}` at {line}:{column}")]
    Undefined { kind: &'static str, name: String, line: usize, column: usize },
    #[error("negative rate in reaction {reaction}: {detail}")]
    NegativeRate { reaction: usize, detail: String },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Species {
    pub name: String,
    /// Mode species are never aggregated; their joint values come from a
    /// declared finite enumeration.
    pub mode_flag: bool,
}

/// A group of mode species together with every feasible joint value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeGroup {
    pub species: Vec<usize>,
    pub values: Vec<Vec<i64>>,
}

#[derive(Clone)]
pub enum RateLaw {
    MassAction(BigRational),
    Polynomial(Polynomial),
    Custom(Arc<dyn CustomRate>),
}

impl fmt::Debug for RateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateLaw::MassAction(c) => write!(f, "MassAction({c})"),
            RateLaw::Polynomial(p) => write!(f, "Polynomial({p:?})"),
            RateLaw::Custom(c) => write!(f, "Custom({})", c.name()),
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    MassAction { c: f64, reactants: Vec<(usize, u32)>, axis_sums: Vec<(usize, PowerSumForm)> },
    Polynomial { form: PowerSumForm },
    Custom(Arc<dyn CustomRate>),
}

#[derive(Debug, Clone)]
pub struct Reaction {
    consume: Vec<u32>,
    produce: Vec<u32>,
    change: Vec<i64>,
    rate: RateLaw,
    kernel: Kernel,
}

impl PartialEq for Reaction {
    fn eq(&self, other: &Self) -> bool {
        let rates_equal = match (&self.rate, &other.rate) {
            (RateLaw::MassAction(a), RateLaw::MassAction(b)) => a == b,
            (RateLaw::Polynomial(a), RateLaw::Polynomial(b)) => a == b,
            (RateLaw::Custom(a), RateLaw::Custom(b)) => a.signature() == b.signature(),
            _ => false,
        };
        rates_equal && self.consume == other.consume && self.produce == other.produce
    }
}

fn binomial_f64(n: i64, k: u32) -> f64 {
    let mut acc = 1.0;
    for i in 0..k as i64 {
        acc *= (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

impl Reaction {
    pub fn new(consume: Vec<u32>, produce: Vec<u32>, rate: RateLaw) -> Result<Self, ModelError> {
        if consume.len() != produce.len() {
            return Err(ModelError::DimensionMismatch(format!(
                "reactant vector has length {}, product vector has length {}",
                consume.len(),
                produce.len()
            )));
        }
        let n = consume.len();
        let change = consume.iter().zip(&produce).map(|(&a, &b)| b as i64 - a as i64).collect();
        let kernel = match &rate {
            RateLaw::MassAction(c) => {
                if c.is_negative() {
                    return Err(ModelError::NegativeRate {
                        reaction: usize::MAX,
                        detail: format!("mass-action constant {c} is negative"),
                    });
                }
                let reactants: Vec<(usize, u32)> =
                    consume.iter().enumerate().filter(|(_, &k)| k > 0).map(|(i, &k)| (i, k)).collect();
                if reactants.iter().any(|&(_, k)| k > crate::faulhaber::MAX_DEGREE) {
                    return Err(ModelError::Invalid("reaction order exceeds 8".into()));
                }
                let axis_sums =
                    reactants.iter().map(|&(i, k)| (i, Polynomial::binomial(1, 0, k).power_sum_form())).collect();
                Kernel::MassAction { c: rational_to_f64(c), reactants, axis_sums }
            }
            RateLaw::Polynomial(p) => {
                if p.nvars() != n {
                    return Err(ModelError::DimensionMismatch(format!(
                        "rate polynomial has {} variables, network has {n} species",
                        p.nvars()
                    )));
                }
                if p.max_axis_degree() > crate::faulhaber::MAX_DEGREE {
                    return Err(ModelError::Invalid("polynomial degree per species exceeds 8".into()));
                }
                Kernel::Polynomial { form: p.power_sum_form() }
            }
            RateLaw::Custom(c) => Kernel::Custom(c.clone()),
        };
        Ok(Reaction { consume, produce, change, rate, kernel })
    }

    pub fn consume(&self) -> &[u32] {
        &self.consume
    }

    pub fn produce(&self) -> &[u32] {
        &self.produce
    }

    pub fn change(&self) -> &[i64] {
        &self.change
    }

    pub fn rate(&self) -> &RateLaw {
        &self.rate
    }

    /// Propensity `α_j(x)`; zero whenever reactants are insufficient.
    pub fn propensity(&self, x: &[i64]) -> f64 {
        match &self.kernel {
            Kernel::MassAction { c, reactants, .. } => {
                let mut acc = *c;
                for &(i, k) in reactants {
                    if x[i] < k as i64 {
                        return 0.0;
                    }
                    acc *= binomial_f64(x[i], k);
                }
                acc
            }
            Kernel::Polynomial { form } => form.sum_over(x, x).max(0.0),
            Kernel::Custom(law) => law.propensity(x),
        }
    }

    /// `Σ_{x ∈ [lo, hi]} α_j(x)` in closed form. Custom laws use their
    /// coarse approximation on regions with more than one state.
    pub fn region_sum(&self, lo: &[i64], hi: &[i64]) -> f64 {
        if lo.iter().zip(hi).any(|(l, h)| h < l) {
            return 0.0;
        }
        match &self.kernel {
            Kernel::MassAction { c, axis_sums, .. } => {
                let mut acc = *c;
                let mut reactant_axis = vec![false; lo.len()];
                for (i, form) in axis_sums {
                    reactant_axis[*i] = true;
                    acc *= form.sum_over(&lo[*i..=*i], &hi[*i..=*i]);
                    if acc == 0.0 {
                        return 0.0;
                    }
                }
                for (i, is_reactant) in reactant_axis.iter().enumerate() {
                    if !is_reactant {
                        acc *= (hi[i] - lo[i] + 1) as f64;
                    }
                }
                acc
            }
            Kernel::Polynomial { form } => form.sum_over(lo, hi).max(0.0),
            Kernel::Custom(law) => {
                if lo == hi {
                    law.propensity(lo)
                } else {
                    law.coarse_sum(lo, hi)
                }
            }
        }
    }

    /// Polynomial form of the propensity, when it has one.
    pub fn rate_polynomial(&self) -> Option<Polynomial> {
        let n = self.consume.len();
        match &self.rate {
            RateLaw::MassAction(c) => {
                let mut p = Polynomial::constant(n, c.clone());
                for (i, &k) in self.consume.iter().enumerate() {
                    if k > 0 {
                        p = &p * &Polynomial::binomial(n, i, k);
                    }
                }
                Some(p)
            }
            RateLaw::Polynomial(p) => Some(p.clone()),
            RateLaw::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    parameters: Vec<(String, BigRational)>,
    modes: Vec<ModeGroup>,
    lyapunov: Option<Polynomial>,
}

impl ReactionNetwork {
    pub fn new(
        species: Vec<Species>,
        reactions: Vec<Reaction>,
        parameters: Vec<(String, BigRational)>,
        modes: Vec<ModeGroup>,
        lyapunov: Option<Polynomial>,
    ) -> Result<Self, ModelError> {
        if species.is_empty() {
            return Err(ModelError::Invalid("a network needs at least one species".into()));
        }
        let n = species.len();
        for (i, s) in species.iter().enumerate() {
            if species[..i].iter().any(|t| t.name == s.name) {
                return Err(ModelError::Invalid(format!("duplicate species `{}`", s.name)));
            }
        }
        for (j, r) in reactions.iter().enumerate() {
            if r.consume.len() != n {
                return Err(ModelError::DimensionMismatch(format!(
                    "reaction {j} has {} entries, network has {n} species",
                    r.consume.len()
                )));
            }
        }
        for group in &modes {
            for v in &group.values {
                if v.len() != group.species.len() {
                    return Err(ModelError::DimensionMismatch(format!(
                        "mode tuple {v:?} does not match {} mode species",
                        group.species.len()
                    )));
                }
                if v.iter().any(|&c| c < 0) {
                    return Err(ModelError::Invalid(format!("mode tuple {v:?} has negative entries")));
                }
            }
            if group.values.is_empty() {
                return Err(ModelError::Invalid("mode group without feasible values".into()));
            }
        }
        for (i, s) in species.iter().enumerate() {
            let grouped = modes.iter().any(|g| g.species.contains(&i));
            if s.mode_flag != grouped {
                return Err(ModelError::Invalid(format!(
                    "species `{}` mode flag disagrees with mode declarations",
                    s.name
                )));
            }
        }
        if let Some(g) = &lyapunov {
            if g.nvars() != n {
                return Err(ModelError::DimensionMismatch("Lyapunov function arity".into()));
            }
        }
        let network = ReactionNetwork { species, reactions, parameters, modes, lyapunov };
        network.check_polynomial_rates()?;
        Ok(network)
    }

    /// Rejects polynomial rate laws that go negative on sampled states.
    fn check_polynomial_rates(&self) -> Result<(), ModelError> {
        let n = self.species.len();
        let per_axis: Vec<i64> = {
            let budget = 4096f64.powf(1.0 / n as f64).floor().max(2.0) as i64;
            vec![budget; n]
        };
        for (j, r) in self.reactions.iter().enumerate() {
            let RateLaw::Polynomial(p) = &r.rate else {
                continue;
            };
            let mut x = vec![0i64; n];
            let mut samples: Vec<Vec<i64>> = Vec::new();
            loop {
                samples.push(x.clone());
                let mut axis = 0;
                while axis < n {
                    x[axis] += 1;
                    if x[axis] < per_axis[axis] {
                        break;
                    }
                    x[axis] = 0;
                    axis += 1;
                }
                if axis == n {
                    break;
                }
            }
            for scale in [100i64, 10_000, 1_000_000] {
                samples.push(vec![scale; n]);
                for i in 0..n {
                    let mut e = vec![0; n];
                    e[i] = scale;
                    samples.push(e);
                }
            }
            for s in samples.into_iter().filter(|s| self.is_feasible(s)) {
                let v = p.eval_exact(&s);
                if v.is_negative() {
                    return Err(ModelError::NegativeRate {
                        reaction: j,
                        detail: format!("rate is {v} at state {s:?}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn species_names(&self) -> Vec<String> {
        self.species.iter().map(|s| s.name.clone()).collect()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn parameters(&self) -> &[(String, BigRational)] {
        &self.parameters
    }

    pub fn parameter(&self, name: &str) -> Option<&BigRational> {
        self.parameters.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn modes(&self) -> &[ModeGroup] {
        &self.modes
    }

    pub fn lyapunov(&self) -> Option<&Polynomial> {
        self.lyapunov.as_ref()
    }

    pub fn with_lyapunov(mut self, g: Polynomial) -> Self {
        self.lyapunov = Some(g);
        self
    }

    pub fn propensity(&self, j: usize, x: &[i64]) -> f64 {
        self.reactions[j].propensity(x)
    }

    /// Nonnegative and consistent with every mode declaration.
    pub fn is_feasible(&self, x: &[i64]) -> bool {
        if x.iter().any(|&c| c < 0) {
            return false;
        }
        self.modes.iter().all(|g| g.values.iter().any(|v| v.iter().zip(&g.species).all(|(&val, &s)| x[s] == val)))
    }

    /// All joint assignments of mode species, as (species, value) lists.
    pub fn mode_assignments(&self) -> Vec<Vec<(usize, i64)>> {
        let mut out: Vec<Vec<(usize, i64)>> = vec![Vec::new()];
        for g in &self.modes {
            let mut next = Vec::new();
            for prefix in &out {
                for v in &g.values {
                    let mut a = prefix.clone();
                    a.extend(g.species.iter().copied().zip(v.iter().copied()));
                    next.push(a);
                }
            }
            out = next;
        }
        out
    }

    pub fn aggregated_axes(&self) -> Vec<usize> {
        (0..self.species.len()).filter(|&i| !self.species[i].mode_flag).collect()
    }
}
