//! Reference solutions used to check the main pipeline: closed-form
//! stationary distributions of independent birth-death networks, long-run
//! occupation times from stochastic simulation, and brute-force lumped
//! rates.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

use crate::aggregation::MacroState;
use crate::generator::StateIndex;
use crate::model::{RateLaw, ReactionNetwork};
use crate::polynomial::rational_to_f64;
use crate::solver::Distribution;

/// Largest region [`brute_force_lumped_rate`] will enumerate.
pub const BRUTE_FORCE_VOLUME_CAP: u128 = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("no closed-form stationary distribution for this network: {0}")]
    Unsupported(String),
    #[error("simulation exceeded {0} jumps")]
    JumpCap(u64),
    #[error("simulation horizon {horizon} must exceed burn-in {burn_in}")]
    Horizon { horizon: f64, burn_in: f64 },
    #[error("region volume {0} exceeds the enumeration cap")]
    VolumeCap(u128),
    #[error("initial state {0:?} is infeasible")]
    Infeasible(Vec<i64>),
}

/// Means of the independent Poisson marginals when every species has only
/// constant-rate production and linear degradation.
pub fn poisson_means(network: &ReactionNetwork) -> Result<Vec<f64>, OracleError> {
    let n = network.num_species();
    let mut birth = vec![0.0; n];
    let mut death = vec![0.0; n];
    for (j, r) in network.reactions().iter().enumerate() {
        let RateLaw::MassAction(c) = r.rate() else {
            return Err(OracleError::Unsupported(format!("reaction {j} is not mass-action")));
        };
        let c = rational_to_f64(c);
        let moved: Vec<usize> = (0..n).filter(|&i| r.change()[i] != 0).collect();
        let consumed: u32 = r.consume().iter().sum();
        match (moved.as_slice(), consumed) {
            ([i], 0) if r.change()[*i] == 1 => birth[*i] += c,
            ([i], 1) if r.change()[*i] == -1 && r.consume()[*i] == 1 => death[*i] += c,
            _ => return Err(OracleError::Unsupported(format!("reaction {j} is not a birth or death"))),
        }
    }
    (0..n)
        .map(|i| {
            if death[i] > 0.0 {
                Ok(birth[i] / death[i])
            } else {
                Err(OracleError::Unsupported(format!("species {i} has no degradation")))
            }
        })
        .collect()
}

pub fn poisson_ln_pmf(mean: f64, k: i64) -> f64 {
    if k < 0 {
        return f64::NEG_INFINITY;
    }
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * mean.ln() - mean - ln_gamma(k as f64 + 1.0)
}

/// Product-Poisson probability of `x`.
pub fn product_pmf(means: &[f64], x: &[i64]) -> f64 {
    means.iter().zip(x).map(|(&m, &k)| poisson_ln_pmf(m, k)).sum::<f64>().exp()
}

/// Exact stationary distribution restricted to `states` and renormalised.
pub fn analytic_stationary(network: &ReactionNetwork, states: &StateIndex) -> Result<Distribution, OracleError> {
    let means = poisson_means(network)?;
    let raw: Vec<f64> = states.states().iter().map(|x| product_pmf(&means, x)).collect();
    let total: f64 = raw.iter().sum();
    let values = if total > 0.0 {
        raw.iter().map(|p| p / total).collect()
    } else {
        vec![1.0 / states.len() as f64; states.len()]
    };
    Ok(Distribution { values, residual: 0.0 })
}

/// Exact stationary mass outside `states`.
pub fn analytic_outside_mass(network: &ReactionNetwork, states: &StateIndex) -> Result<f64, OracleError> {
    let means = poisson_means(network)?;
    let inside: f64 = states.states().iter().map(|x| product_pmf(&means, x)).sum();
    Ok((1.0 - inside).max(0.0))
}

/// Exact stationary probabilities on `states`, not renormalised.
pub fn analytic_pmf(network: &ReactionNetwork, states: &StateIndex) -> Result<Vec<f64>, OracleError> {
    let means = poisson_means(network)?;
    Ok(states.states().iter().map(|x| product_pmf(&means, x)).collect())
}

/// Closed-form stationary distribution on the box where every marginal
/// probability is at least `tol`; the mass left out is below `n · tol`
/// times a modest factor.
pub fn analytic_reference(network: &ReactionNetwork, tol: f64) -> Result<Vec<(Vec<i64>, f64)>, OracleError> {
    let means = poisson_means(network)?;
    let ln_tol = tol.ln();
    let ranges: Vec<(i64, i64)> = means
        .iter()
        .map(|&m| {
            let mode = m.floor() as i64;
            let mut lo = mode;
            while lo > 0 && poisson_ln_pmf(m, lo - 1) >= ln_tol {
                lo -= 1;
            }
            let mut hi = mode;
            while poisson_ln_pmf(m, hi + 1) >= ln_tol {
                hi += 1;
            }
            (lo, hi)
        })
        .collect();
    let region = MacroState::new(ranges.iter().map(|r| r.0).collect(), ranges.iter().map(|r| r.1).collect());
    if region.volume() > BRUTE_FORCE_VOLUME_CAP {
        return Err(OracleError::VolumeCap(region.volume()));
    }
    Ok(region
        .states()
        .map(|x| {
            let p = product_pmf(&means, &x);
            (x, p)
        })
        .collect())
}

/// Fraction of post-burn-in time spent in each visited state.
#[derive(Debug, Clone)]
pub struct OccupancyEstimate {
    pub occupancy: BTreeMap<Vec<i64>, f64>,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub jumps: u64,
}

impl OccupancyEstimate {
    pub fn mass_in(&self, states: &StateIndex) -> f64 {
        self.occupancy.iter().filter(|(x, _)| states.contains(x)).map(|(_, p)| p).sum()
    }

    pub fn mass_outside(&self, states: &StateIndex) -> f64 {
        (1.0 - self.mass_in(states)).max(0.0)
    }

    /// Averages replicas weighted by their observation windows.
    pub fn merge(estimates: &[OccupancyEstimate]) -> OccupancyEstimate {
        let weights: Vec<f64> = estimates.iter().map(|e| e.horizon - e.burn_in).collect();
        let total: f64 = weights.iter().sum();
        let mut occupancy = BTreeMap::new();
        for (e, w) in estimates.iter().zip(&weights) {
            for (x, p) in &e.occupancy {
                *occupancy.entry(x.clone()).or_insert(0.0) += p * w / total;
            }
        }
        OccupancyEstimate {
            occupancy,
            horizon: estimates.iter().map(|e| e.horizon).sum(),
            burn_in: estimates.iter().map(|e| e.burn_in).sum(),
            seed: estimates.first().map_or(0, |e| e.seed),
            jumps: estimates.iter().map(|e| e.jumps).sum(),
        }
    }
}

struct Simulator<'a> {
    network: &'a ReactionNetwork,
    rng: ChaCha8Rng,
    rates: Vec<f64>,
}

impl<'a> Simulator<'a> {
    fn new(network: &'a ReactionNetwork, seed: u64) -> Self {
        Simulator { network, rng: ChaCha8Rng::seed_from_u64(seed), rates: vec![0.0; network.reactions().len()] }
    }

    /// Sojourn time in `x` and the reaction that ends it, or `None` if `x`
    /// is absorbing.
    fn step(&mut self, x: &[i64]) -> Option<(f64, usize)> {
        let mut total = 0.0;
        for (j, r) in self.network.reactions().iter().enumerate() {
            self.rates[j] = r.propensity(x);
            total += self.rates[j];
        }
        if total <= 0.0 {
            return None;
        }
        let u: f64 = 1.0 - self.rng.random::<f64>();
        let dt = -u.ln() / total;
        let mut target = self.rng.random::<f64>() * total;
        let mut chosen = self.rates.len() - 1;
        for (j, &a) in self.rates.iter().enumerate() {
            if target < a {
                chosen = j;
                break;
            }
            target -= a;
        }
        while self.rates[chosen] == 0.0 {
            chosen -= 1;
        }
        Some((dt, chosen))
    }

    fn apply(&self, x: &mut [i64], j: usize) {
        for (xi, v) in x.iter_mut().zip(self.network.reactions()[j].change()) {
            *xi += v;
        }
    }
}

/// Direct-method simulation from `x0` up to time `horizon`, recording
/// sojourn times after `burn_in`.
pub fn ssa_occupancy(
    network: &ReactionNetwork,
    x0: &[i64],
    horizon: f64,
    burn_in: f64,
    seed: u64,
    max_jumps: u64,
) -> Result<OccupancyEstimate, OracleError> {
    if !(horizon > burn_in && burn_in >= 0.0) {
        return Err(OracleError::Horizon { horizon, burn_in });
    }
    if !network.is_feasible(x0) {
        return Err(OracleError::Infeasible(x0.to_vec()));
    }
    let mut sim = Simulator::new(network, seed);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut jumps = 0u64;
    let mut occupancy: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    while t < horizon {
        let step = sim.step(&x);
        let (dt, j) = match step {
            Some(s) => s,
            None => (f64::INFINITY, usize::MAX),
        };
        let start = t.max(burn_in);
        let end = (t + dt).min(horizon);
        if end > start {
            *occupancy.entry(x.clone()).or_insert(0.0) += end - start;
        }
        t += dt;
        if t >= horizon {
            break;
        }
        sim.apply(&mut x, j);
        jumps += 1;
        if jumps > max_jumps {
            return Err(OracleError::JumpCap(max_jumps));
        }
    }
    let window = horizon - burn_in;
    occupancy.values_mut().for_each(|v| *v /= window);
    Ok(OccupancyEstimate { occupancy, horizon, burn_in, seed, jumps })
}

/// States observed at times `0, dt, 2dt, …` up to `horizon`.
pub fn ssa_trajectory(
    network: &ReactionNetwork,
    x0: &[i64],
    horizon: f64,
    dt: f64,
    seed: u64,
    max_jumps: u64,
) -> Result<Vec<Vec<i64>>, OracleError> {
    if !network.is_feasible(x0) {
        return Err(OracleError::Infeasible(x0.to_vec()));
    }
    let mut sim = Simulator::new(network, seed);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut next_sample = 0.0;
    let mut samples = Vec::new();
    let mut jumps = 0u64;
    while next_sample <= horizon {
        let (step, j) = sim.step(&x).unwrap_or((f64::INFINITY, usize::MAX));
        while next_sample < t + step && next_sample <= horizon {
            samples.push(x.clone());
            next_sample += dt;
        }
        t += step;
        if !t.is_finite() {
            break;
        }
        sim.apply(&mut x, j);
        jumps += 1;
        if jumps > max_jumps {
            return Err(OracleError::JumpCap(max_jumps));
        }
    }
    Ok(samples)
}

/// Sample autocorrelation of `series` at lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|lag| {
            let cov: f64 = (0..n - lag).map(|t| (series[t] - mean) * (series[t + lag] - mean)).sum();
            if var > 0.0 {
                cov / var
            } else {
                0.0
            }
        })
        .collect()
}

/// `Σ_{x ∈ region} α_j(x)` by explicit enumeration.
pub fn brute_force_lumped_rate(
    network: &ReactionNetwork,
    j: usize,
    region: Option<&MacroState>,
) -> Result<f64, OracleError> {
    let Some(region) = region else { return Ok(0.0) };
    if region.volume() > BRUTE_FORCE_VOLUME_CAP {
        return Err(OracleError::VolumeCap(region.volume()));
    }
    let r = &network.reactions()[j];
    Ok(region.states().map(|x| r.propensity(&x)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn bd() -> ReactionNetwork {
        parse_model("species S; 0 -> S @ mass_action(20); S -> 0 @ mass_action(1);").unwrap()
    }

    #[test]
    fn poisson_means_from_structure() {
        assert_eq!(poisson_means(&bd()).unwrap(), vec![20.0]);
        let dimer = parse_model("species S; 0 -> S @ mass_action(1); 2*S -> 0 @ mass_action(1);").unwrap();
        assert!(matches!(poisson_means(&dimer), Err(OracleError::Unsupported(_))));
    }

    #[test]
    fn reference_box_holds_the_mass() {
        let r = analytic_reference(&bd(), 1e-20).unwrap();
        let total: f64 = r.iter().map(|(_, p)| p).sum();
        // each term carries the rounding of exp(ln pmf)
        assert!((total - 1.0).abs() < 1e-13, "{total}");
        assert_eq!(r[0].0, vec![0]);
    }

    #[test]
    fn renormalised_tail() {
        let states = StateIndex::from_box(&[60], &[70], |_| true);
        let d = analytic_stationary(&bd(), &states).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!(d.values[0] > d.values[10]);
    }

    #[test]
    fn brute_force_examples() {
        let net = parse_model("species X; 2*X -> 0 @ mass_action(1); 0 -> X @ mass_action(100);").unwrap();
        let r = MacroState::new(vec![0], vec![3]);
        assert_eq!(brute_force_lumped_rate(&net, 0, Some(&r)).unwrap(), 4.0);
        let r16 = MacroState::new(vec![0], vec![15]);
        assert_eq!(brute_force_lumped_rate(&net, 1, Some(&r16)).unwrap(), 1600.0);
        assert_eq!(brute_force_lumped_rate(&net, 1, None).unwrap(), 0.0);
    }

    #[test]
    fn ssa_is_reproducible_and_normalised() {
        let a = ssa_occupancy(&bd(), &[0], 200.0, 20.0, 7, 1_000_000).unwrap();
        let b = ssa_occupancy(&bd(), &[0], 200.0, 20.0, 7, 1_000_000).unwrap();
        assert_eq!(a.jumps, b.jumps);
        let total: f64 = a.occupancy.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn autocorrelation_of_alternating_series() {
        let s: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ac = autocorrelation(&s, 2);
        assert!((ac[0] - 1.0).abs() < 1e-12);
        assert!(ac[1] < -0.9);
        assert!(ac[2] > 0.9);
    }
}
