//! State-wise bounds on the stationary distribution conditioned on a
//! truncation.
//!
//! Every way of sending the total outflow to a single in-boundary state
//! gives one stationary solution; the element-wise minimum and maximum over
//! all targets bracket the conditional distribution. The uniform-reentry
//! solution is included in the envelope.
//!
//! The single-target solution for target `b` is the normalised vector of
//! expected occupation times, starting in `b`, of the truncated chain killed
//! at its outflow rates. One factorisation serves every target; a target
//! whose occupation vector misses the residual contract is re-solved with
//! the general solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::generator::{apply_single_target, build_generator, inboundary_states, SparseGenerator, StateIndex};
use crate::model::ReactionNetwork;
use crate::solver::{
    solve_on_closed_class, Distribution, OccupationTimes, SolveOptions, SolverError, SolverMethod, RESIDUAL_FACTOR,
};

#[derive(Debug, thiserror::Error)]
pub enum BoundsError {
    #[error("truncation has outflow but no in-boundary states")]
    NoTargets,
    #[error("uniform-reentry solve failed: {0}")]
    Uniform(SolverError),
    #[error("every single-target solve failed")]
    AllFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalResult {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub total_width: f64,
    pub max_width: f64,
    /// In-boundary states used as targets.
    pub targets: Vec<usize>,
    /// Targets whose solve failed; the envelope omits them.
    pub failed_targets: Vec<usize>,
}

impl IntervalResult {
    pub fn is_partial(&self) -> bool {
        !self.failed_targets.is_empty()
    }

    fn from_envelope(lower: Vec<f64>, upper: Vec<f64>, targets: Vec<usize>, failed_targets: Vec<usize>) -> Self {
        let widths = lower.iter().zip(&upper).map(|(l, u)| u - l);
        let (total_width, max_width) = widths.fold((0.0, 0.0f64), |(s, m), w| (s + w, m.max(w)));
        IntervalResult { lower, upper, total_width, max_width, targets, failed_targets }
    }
}

/// Bounds over `truncation`, plus the uniform-reentry solution.
pub fn statewise_bounds(
    network: &ReactionNetwork,
    truncation: &StateIndex,
    method: SolverMethod,
) -> Result<(IntervalResult, Distribution), BoundsError> {
    let assembled = build_generator(network, truncation);
    let inboundary = inboundary_states(network, truncation);
    let uniform_q = assembled.uniform_reentry(&inboundary).map_err(|_| BoundsError::NoTargets)?;
    let options = SolveOptions { method, ..Default::default() };
    let uniform = solve_on_closed_class(&uniform_q, &options).map_err(BoundsError::Uniform)?.0;
    if assembled.outflow.is_empty() {
        let r = IntervalResult::from_envelope(uniform.values.clone(), uniform.values.clone(), Vec::new(), Vec::new());
        return Ok((r, uniform));
    }
    let mut absorb = vec![0.0; truncation.len()];
    for o in &assembled.outflow {
        absorb[o.source] += o.rate;
    }
    let occupation = match OccupationTimes::new(&assembled.generator, &absorb) {
        Ok(o) => Some(o),
        Err(e) => {
            log::debug!("no shared factorisation for the bounds ({e}); solving each target separately");
            None
        }
    };
    let solutions: Vec<(usize, Result<Distribution, SolverError>)> = inboundary
        .par_iter()
        .map(|&b| {
            let q = apply_single_target(&assembled.generator, &assembled.outflow, b);
            if let Some(d) = occupation.as_ref().and_then(|o| normalised_occupation(o, &q, b)) {
                return (b, Ok(d));
            }
            (b, solve_on_closed_class(&q, &options).map(|(d, _)| d))
        })
        .collect();
    let mut lower = uniform.values.clone();
    let mut upper = uniform.values.clone();
    let mut failed = Vec::new();
    for (b, s) in &solutions {
        match s {
            Ok(d) => {
                for (i, &p) in d.values.iter().enumerate() {
                    lower[i] = lower[i].min(p);
                    upper[i] = upper[i].max(p);
                }
            }
            Err(e) => {
                log::warn!("single-target solve for state {b} failed: {e}");
                failed.push(*b);
            }
        }
    }
    if failed.len() == solutions.len() {
        return Err(BoundsError::AllFailed);
    }
    Ok((IntervalResult::from_envelope(lower, upper, inboundary, failed), uniform))
}

/// Occupation vector from `b`, normalised, if it meets the residual contract
/// for the single-target generator `q`.
fn normalised_occupation(occupation: &OccupationTimes, q: &SparseGenerator, b: usize) -> Option<Distribution> {
    let x = occupation.from_state(b);
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    let values: Vec<f64> = x.iter().map(|v| v / total).collect();
    let residual = q.left_mul(&values).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (residual <= RESIDUAL_FACTOR * q.max_abs()).then_some(Distribution { values, residual })
}
