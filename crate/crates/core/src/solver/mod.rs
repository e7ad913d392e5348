//! Stationary distributions of finite generators: `π Q = 0`, `Σ π = 1`.
//!
//! The direct path reorders states by reverse Cuthill–McKee and runs banded
//! GTH elimination. The iterative path replaces one balance equation by
//! `π_k = 1`, with `k` the state of largest mass after a short power
//! iteration, and runs BiCGSTAB preconditioned by ILU(0); the solution is then
//! renormalised.

pub mod bicgstab;
pub mod gth;
pub mod ilu;
pub mod rcm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::generator::{closed_classes, SparseGenerator};
use bicgstab::{bicgstab, KrylovSettings};
use gth::{BandRates, TransientFactor};
use ilu::Ilu0;

/// Problems up to this size always use the direct path under `auto`.
pub const DIRECT_SIZE: usize = 5000;
/// Memory cap for the band elimination.
pub const DIRECT_MEMORY_LIMIT: u128 = 1 << 30;
/// Flop budget for the band elimination under `auto`.
pub const DIRECT_FLOP_LIMIT: f64 = 5e10;
/// Negative entries above this are round-off and get clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;
/// Residual contract: `‖πQ‖∞ ≤ RESIDUAL_FACTOR · max|Q|`.
pub const RESIDUAL_FACTOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SolverMethod {
    #[default]
    Auto,
    Dense,
    Iterative,
}

impl fmt::Display for SolverMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMethod::Auto => "auto",
            SolverMethod::Dense => "dense",
            SolverMethod::Iterative => "iterative",
        })
    }
}

impl FromStr for SolverMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(SolverMethod::Auto),
            "dense" => Ok(SolverMethod::Dense),
            "iterative" => Ok(SolverMethod::Iterative),
            other => Err(format!("unknown solver `{other}` (expected auto, dense or iterative)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:.3e}, target {target:.3e})")]
    NonConvergence { iterations: usize, residual: f64, target: f64 },
    #[error("chain looks reducible: entry {index} is {value:.3e}")]
    Reducible { index: usize, value: f64 },
    #[error("direct solve needs {bytes} bytes of band storage for {n} states")]
    TooLargeForDirect { n: usize, bytes: u128 },
    #[error("empty generator")]
    Empty,
}

/// Probability vector over state indices with the residual `‖πQ‖∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    pub values: Vec<f64>,
    pub residual: f64,
}

impl Distribution {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub method: SolverMethod,
    /// Approximate solution used for the pivot choice and as the Krylov
    /// starting point.
    pub warm_start: Option<Vec<f64>>,
    pub krylov: Option<KrylovSettings>,
}

/// Which path a solve takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    Direct,
    Iterative,
}

pub fn solve_stationary(q: &SparseGenerator, method: SolverMethod) -> Result<Distribution, SolverError> {
    solve_stationary_with(q, &SolveOptions { method, ..Default::default() })
}

pub fn solve_stationary_with(q: &SparseGenerator, options: &SolveOptions) -> Result<Distribution, SolverError> {
    let n = q.dim();
    if n == 0 {
        return Err(SolverError::Empty);
    }
    if n == 1 {
        return Ok(Distribution { values: vec![1.0], residual: 0.0 });
    }
    let adj = rcm::symmetric_pattern(q);
    let perm = rcm::reverse_cuthill_mckee(&adj);
    let bw = rcm::bandwidth(&adj, &perm);
    let bytes = BandRates::storage_bytes(n, bw);
    let path = match options.method {
        SolverMethod::Dense => Path::Direct,
        SolverMethod::Iterative => Path::Iterative,
        SolverMethod::Auto => {
            let flops = 2.0 * n as f64 * (bw * bw) as f64;
            if bytes <= DIRECT_MEMORY_LIMIT && (n <= DIRECT_SIZE || flops <= DIRECT_FLOP_LIMIT) {
                Path::Direct
            } else {
                Path::Iterative
            }
        }
    };
    log::debug!("solving {n} states via {path:?} (bandwidth {bw})");
    let x = match path {
        Path::Direct => {
            if bytes > DIRECT_MEMORY_LIMIT {
                return Err(SolverError::TooLargeForDirect { n, bytes });
            }
            solve_direct(q, &perm, bw)?
        }
        Path::Iterative => {
            let guess = power_warm_start(q, options.warm_start.as_deref(), 30);
            let k = argmax(&guess);
            solve_iterative(q, k, &guess, options.krylov.unwrap_or_default())?
        }
    };
    finish(q, x)
}

/// Applies `A x` where `A` is `Qᵀ` with row `k` replaced by `e_k`.
fn apply_system(q: &SparseGenerator, k: usize, x: &[f64], y: &mut [f64]) {
    for (r, yr) in y.iter_mut().enumerate() {
        *yr = x[r] * q.diag(r);
    }
    for (r, &xr) in x.iter().enumerate() {
        if xr == 0.0 {
            continue;
        }
        for (c, v) in q.row(r) {
            y[c] += xr * v;
        }
    }
    y[k] = x[k];
}

fn solve_direct(q: &SparseGenerator, perm: &[usize], bw: usize) -> Result<Vec<f64>, SolverError> {
    let n = q.dim();
    let mut pos = vec![0; n];
    for (new, &old) in perm.iter().enumerate() {
        pos[old] = new;
    }
    let mut rates = BandRates::zeros(n, bw);
    for r in 0..n {
        for (c, v) in q.row(r) {
            rates.add(pos[r], pos[c], v);
        }
    }
    let pi = rates.stationary().map_err(|e| SolverError::Reducible { index: perm[e.0], value: 0.0 })?;
    Ok(pos.iter().map(|&p| pi[p]).collect())
}

/// Rows of the pinned system: column `r` of `Q`, except row `k` which is `e_k`.
fn pinned_factorisation(q: &SparseGenerator, k: usize) -> Ilu0 {
    let n = q.dim();
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|r| vec![(r, q.diag(r))]).collect();
    for r in 0..n {
        for (c, v) in q.row(r) {
            if c != k {
                rows[c].push((r, v));
            }
        }
    }
    rows[k] = vec![(k, 1.0)];
    Ilu0::new(rows)
}

/// Largest finite entry.
fn finite_argmax(v: &[f64]) -> Option<usize> {
    v.iter().enumerate().filter(|(_, x)| x.is_finite()).max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i)
}

fn solve_iterative(
    q: &SparseGenerator,
    mut k: usize,
    guess: &[f64],
    settings: KrylovSettings,
) -> Result<Vec<f64>, SolverError> {
    let n = q.dim();
    let mut b = vec![0.0; n];
    b[k] = 1.0;
    let mut ilu = pinned_factorisation(q, k);
    let mut approx = vec![0.0; n];
    // Pinning a state far from the mode makes π/π_k huge, so move the pin to
    // the mode of the preconditioner's own approximate solution. When that
    // overflows, the largest finite entry is still ~1e308 times heavier.
    for _ in 0..32 {
        ilu.apply(&b, &mut approx);
        match finite_argmax(&approx) {
            Some(m) if m != k && approx[m] > 1.0 => {
                b[k] = 0.0;
                b[m] = 1.0;
                k = m;
                log::trace!("pin moved to {k}");
                ilu = pinned_factorisation(q, k);
            }
            _ => break,
        }
    }
    ilu.apply(&b, &mut approx);
    let x0: Vec<f64> = if approx.iter().all(|v| v.is_finite()) {
        approx
    } else {
        let scale = if guess[k] > 0.0 { 1.0 / guess[k] } else { 1.0 };
        guess.iter().map(|g| g * scale).collect()
    };
    // a pinned residual this small keeps the normalised one inside the contract
    let target = RESIDUAL_FACTOR * q.max_abs();
    let settings = KrylovSettings { tolerance: settings.tolerance.max(1e-3 * target / (n as f64).sqrt()), ..settings };
    let out = bicgstab(|x, y| apply_system(q, k, x, y), |x, y| ilu.apply(x, y), &b, x0, settings);
    log::debug!("BiCGSTAB: {} iterations, residual {:.3e}, converged {}", out.iterations, out.residual, out.converged);
    let total: f64 = out.x.iter().sum();
    let residual = inf_norm(&q.left_mul(&out.x)) / total.abs().max(f64::MIN_POSITIVE);
    if !(residual <= target && total > 0.0) {
        return Err(SolverError::NonConvergence { iterations: settings.max_iterations, residual, target });
    }
    Ok(out.x)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// A few steps of the uniformised chain `x ← x (I + Q/Λ)`.
pub fn power_warm_start(q: &SparseGenerator, start: Option<&[f64]>, steps: usize) -> Vec<f64> {
    let n = q.dim();
    let mut x: Vec<f64> = match start {
        Some(s) if s.len() == n && s.iter().any(|&v| v > 0.0) => s.iter().map(|v| v.max(0.0)).collect(),
        _ => vec![1.0 / n as f64; n],
    };
    let lambda = q.max_abs() * 1.05;
    if lambda == 0.0 {
        return x;
    }
    for _ in 0..steps {
        let y = q.left_mul(&x);
        for (xi, yi) in x.iter_mut().zip(y) {
            *xi = (*xi + yi / lambda).max(0.0);
        }
    }
    x
}

/// Normalises, clamps round-off negatives and enforces the residual contract.
fn finish(q: &SparseGenerator, x: Vec<f64>) -> Result<Distribution, SolverError> {
    let total: f64 = x.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(SolverError::Reducible { index: 0, value: total });
    }
    let mut values: Vec<f64> = x.iter().map(|v| v / total).collect();
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| v < -NEGATIVE_TOLERANCE || !v.is_finite()) {
        return Err(SolverError::Reducible { index, value });
    }
    let mut clamped = false;
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
            clamped = true;
        }
    }
    if clamped {
        let s: f64 = values.iter().sum();
        values.iter_mut().for_each(|v| *v /= s);
    }
    let residual = inf_norm(&q.left_mul(&values));
    let target = RESIDUAL_FACTOR * q.max_abs();
    if residual > target {
        return Err(SolverError::NonConvergence { iterations: 0, residual, target });
    }
    Ok(Distribution { values, residual })
}

/// Solves on the largest closed communicating class and pads with zeros.
/// The flag is set when the chain was not irreducible.
pub fn solve_on_closed_class(q: &SparseGenerator, options: &SolveOptions) -> Result<(Distribution, bool), SolverError> {
    let classes = closed_classes(q);
    if classes.len() == 1 && classes[0].len() == q.dim() {
        return Ok((solve_stationary_with(q, options)?, false));
    }
    if classes.len() > 1 {
        log::warn!(
            "{} closed classes; keeping the largest ({} of {} states)",
            classes.len(),
            classes[0].len(),
            q.dim()
        );
    }
    let class = &classes[0];
    let warm = options.warm_start.as_ref().map(|w| class.iter().map(|&i| w[i]).collect());
    let sub = solve_stationary_with(&q.restrict(class), &SolveOptions { warm_start: warm, ..options.clone() })?;
    let mut values = vec![0.0; q.dim()];
    for (&i, &p) in class.iter().zip(&sub.values) {
        values[i] = p;
    }
    let residual = inf_norm(&q.left_mul(&values));
    Ok((Distribution { values, residual }, true))
}

/// Occupation times of the chain `q` killed at per-state rates `absorb`,
/// factorised once and queried for many starting states.
///
/// For the chain that sends all killed mass back to `b`, the stationary
/// distribution is the normalised occupation vector from `b`.
#[derive(Debug, Clone)]
pub struct OccupationTimes {
    pos: Vec<usize>,
    factor: TransientFactor,
}

impl OccupationTimes {
    pub fn new(q: &SparseGenerator, absorb: &[f64]) -> Result<Self, SolverError> {
        let n = q.dim();
        if n == 0 {
            return Err(SolverError::Empty);
        }
        let adj = rcm::symmetric_pattern(q);
        let perm = rcm::reverse_cuthill_mckee(&adj);
        let bw = rcm::bandwidth(&adj, &perm);
        let bytes = BandRates::storage_bytes(n, bw);
        if bytes > DIRECT_MEMORY_LIMIT {
            return Err(SolverError::TooLargeForDirect { n, bytes });
        }
        let mut pos = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pos[old] = new;
        }
        let mut rates = BandRates::zeros(n, bw);
        let mut killed = vec![0.0; n];
        for r in 0..n {
            for (c, v) in q.row(r) {
                rates.add(pos[r], pos[c], v);
            }
            killed[pos[r]] = absorb[r];
        }
        let factor = rates.transient(&killed).map_err(|e| SolverError::Reducible { index: perm[e.0], value: 0.0 })?;
        Ok(OccupationTimes { pos, factor })
    }

    /// Expected time in each state before absorption, starting in `b`.
    pub fn from_state(&self, b: usize) -> Vec<f64> {
        let x = self.factor.occupation(self.pos[b]);
        self.pos.iter().map(|&p| x[p]).collect()
    }
}
