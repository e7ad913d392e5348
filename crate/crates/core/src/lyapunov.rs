//! Drift of a polynomial Lyapunov function, its supremum, and the bounding
//! box of the high-probability set `{x : (ε/c)·d(x) > ε − 1}`.
//!
//! Custom rate laws enter the drift as `envelope · Δg · gate` with the gate
//! in `[0, 1]`. For maximisation a gated term with a nonpositive polynomial
//! part is bounded above by 0, one with a nonnegative part by the polynomial
//! itself; mixed signs are rejected.

use std::sync::Arc;

use crate::model::{CustomRate, ReactionNetwork};
use crate::polynomial::{rational_to_f64, Polynomial};

/// Default per-axis horizon for population species.
pub const DEFAULT_HORIZON: i64 = 1 << 31;

#[derive(Debug, thiserror::Error)]
pub enum LyapunovError {
    #[error("epsilon_l must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("not a valid Lyapunov certificate: drift grows towards the horizon (maximiser {point:?})")]
    NotCertificate { point: Vec<f64> },
    #[error("drift supremum {0} is not positive; the Lyapunov set is unbounded")]
    NonPositiveSupremum(f64),
    #[error("Lyapunov set is not finite within the horizon along species `{0}`")]
    Unbounded(String),
    #[error("gated drift term of reaction {0} changes sign; cannot bound it")]
    MixedSignGate(usize),
    #[error("Lyapunov function has {got} variables, network has {expected} species")]
    Arity { expected: usize, got: usize },
    #[error("no Lyapunov function given")]
    Missing,
}

/// Squared Euclidean norm over all species.
pub fn squared_l2(nvars: usize) -> Polynomial {
    let mut g = Polynomial::zero(nvars);
    for i in 0..nvars {
        g = &g + &Polynomial::variable(nvars, i).pow(2);
    }
    g
}

/// Drift term `envelope · Δg · gate(x)` coming from a custom rate law.
#[derive(Debug, Clone)]
pub struct GatedTerm {
    pub reaction: usize,
    pub polynomial: Polynomial,
    pub law: Arc<dyn CustomRate>,
}

/// Symbolic drift: a polynomial part plus gated terms.
#[derive(Debug, Clone)]
pub struct Drift {
    pub polynomial: Polynomial,
    pub gated: Vec<GatedTerm>,
}

impl Drift {
    pub fn new(network: &ReactionNetwork, g: &Polynomial) -> Result<Self, LyapunovError> {
        let n = network.num_species();
        if g.nvars() != n {
            return Err(LyapunovError::Arity { expected: n, got: g.nvars() });
        }
        let mut polynomial = Polynomial::zero(n);
        let mut gated = Vec::new();
        for (j, r) in network.reactions().iter().enumerate() {
            let delta = &g.shift(r.change()) - g;
            match r.rate_polynomial() {
                Some(rate) => polynomial = &polynomial + &(&rate * &delta),
                None => {
                    let crate::model::RateLaw::Custom(law) = r.rate() else { unreachable!() };
                    let term = &law.envelope() * &delta;
                    if !term.is_zero() {
                        gated.push(GatedTerm { reaction: j, polynomial: term, law: law.clone() });
                    }
                }
            }
        }
        Ok(Drift { polynomial, gated })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.polynomial.eval(x) + self.gated.iter().map(|t| t.polynomial.eval(x) * t.law.gate(x)).sum::<f64>()
    }

    /// Polynomial that bounds the drift from above on the nonnegative orthant.
    pub fn upper_polynomial(&self) -> Result<Polynomial, LyapunovError> {
        let mut p = self.polynomial.clone();
        for t in &self.gated {
            if t.polynomial.all_coefficients_nonpositive() {
                continue;
            }
            if t.polynomial.all_coefficients_nonnegative() {
                p = &p + &t.polynomial;
            } else {
                return Err(LyapunovError::MixedSignGate(t.reaction));
            }
        }
        Ok(p)
    }
}

/// `d(x) = Σ_j α_j(x)·(g(x + v_j) − g(x))`, evaluated directly. The
/// differences of `g` are taken in exact arithmetic; in floating point they
/// cancel badly once `g(x)` is large.
pub fn drift(network: &ReactionNetwork, g: &Polynomial, x: &[i64]) -> f64 {
    let gx = g.eval_exact(x);
    let mut y = x.to_vec();
    let mut acc = 0.0;
    for r in network.reactions() {
        let a = r.propensity(x);
        if a == 0.0 {
            continue;
        }
        for (k, yk) in y.iter_mut().enumerate() {
            *yk = x[k] + r.change()[k];
        }
        acc += a * rational_to_f64(&(g.eval_exact(&y) - &gx));
    }
    acc
}

/// Per-species `[lo, hi]` ranges: `[0, horizon]` for populations, the
/// declared value range for mode species.
pub fn horizon_box(network: &ReactionNetwork, horizon: i64) -> Vec<(f64, f64)> {
    let mut b = vec![(0.0, horizon as f64); network.num_species()];
    for group in network.modes() {
        for (k, &s) in group.species.iter().enumerate() {
            let lo = group.values.iter().map(|v| v[k]).min().unwrap_or(0);
            let hi = group.values.iter().map(|v| v[k]).max().unwrap_or(0);
            b[s] = (lo as f64, hi as f64);
        }
    }
    b
}

/// Maximum of `f` over the box and a maximiser.
///
/// Total degree ≤ 2 is maximised exactly over the continuous box by
/// enumerating faces and solving for the stationary point on each. Higher
/// degrees fall back to a grid scan with linear spacing near the origin and
/// geometric spacing beyond.
pub fn maximize(f: &Polynomial, bounds: &[(f64, f64)]) -> (f64, Vec<f64>) {
    if f.total_degree() <= 2 && bounds.len() <= 12 {
        maximize_quadratic(f, bounds)
    } else {
        maximize_scan(f, bounds)
    }
}

fn maximize_quadratic(f: &Polynomial, bounds: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let n = bounds.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![vec![0.0; n]; n];
    for (e, c) in f.terms() {
        let c = crate::polynomial::rational_to_f64(c);
        let vars: Vec<usize> = (0..n).filter(|&i| e[i] > 0).collect();
        match (e.iter().sum::<u32>(), vars.as_slice()) {
            (1, [i]) => grad[*i] += c,
            (2, [i]) => hess[*i][*i] += 2.0 * c,
            (2, [i, j]) => {
                hess[*i][*j] += c;
                hess[*j][*i] += c;
            }
            _ => {}
        }
    }
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut choice = vec![0u8; n];
    loop {
        if let Some(x) = face_candidate(&grad, &hess, bounds, &choice) {
            let v = f.eval(&x);
            if v > best.0 {
                best = (v, x);
            }
        }
        let mut k = 0;
        while k < n {
            choice[k] += 1;
            if choice[k] < 3 {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    best
}

/// Stationary point of the quadratic on the face where axes with choice 0/1
/// sit at their lower/upper bound and axes with choice 2 are free.
fn face_candidate(grad: &[f64], hess: &[Vec<f64>], bounds: &[(f64, f64)], choice: &[u8]) -> Option<Vec<f64>> {
    let n = bounds.len();
    let mut x = vec![0.0; n];
    let mut free = Vec::new();
    for i in 0..n {
        match choice[i] {
            0 => x[i] = bounds[i].0,
            1 => {
                if bounds[i].1 == bounds[i].0 {
                    return None;
                }
                x[i] = bounds[i].1
            }
            _ => {
                if bounds[i].1 == bounds[i].0 {
                    return None;
                }
                free.push(i)
            }
        }
    }
    if free.is_empty() {
        return Some(x);
    }
    // H_FF x_F = −(g_F + H_FX x_X)
    let m = free.len();
    let mut a: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| hess[i][j]).collect()).collect();
    let mut rhs: Vec<f64> = free
        .iter()
        .map(|&i| -(grad[i] + (0..n).filter(|j| !free.contains(j)).map(|j| hess[i][j] * x[j]).sum::<f64>()))
        .collect();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..m {
            let factor = a[r][col] / a[col][col];
            for c in col..m {
                a[r][c] -= factor * a[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    for col in (0..m).rev() {
        let mut s = rhs[col];
        for c in col + 1..m {
            s -= a[col][c] * rhs[c];
        }
        rhs[col] = s / a[col][col];
    }
    for (k, &i) in free.iter().enumerate() {
        let (lo, hi) = bounds[i];
        if rhs[k] < lo || rhs[k] > hi {
            return None;
        }
        x[i] = rhs[k];
    }
    Some(x)
}

fn axis_samples(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    let linear = count / 2;
    for k in 0..linear {
        pts.push((lo + k as f64).min(hi));
    }
    let span = (hi - lo).max(1.0);
    let geometric = count - linear;
    for k in 0..geometric {
        pts.push(lo + span.powf(k as f64 / geometric.max(1) as f64));
    }
    pts.retain(|p| *p >= lo && *p <= hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn maximize_scan(f: &Polynomial, bounds: &[(f64, f64)]) -> (f64, Vec<f64>) {
    let n = bounds.len();
    let per_axis = (200_000f64.powf(1.0 / n as f64).floor() as usize).max(3);
    let samples: Vec<Vec<f64>> = bounds.iter().map(|&(lo, hi)| axis_samples(lo, hi, per_axis)).collect();
    let mut idx = vec![0usize; n];
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    loop {
        let x: Vec<f64> = (0..n).map(|i| samples[i][idx[i]]).collect();
        let v = f.eval(&x);
        if v > best.0 {
            best = (v, x);
        }
        let mut k = 0;
        while k < n {
            idx[k] += 1;
            if idx[k] < samples[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    best
}

/// Upper bound on the drift over `horizon`. Errors if the maximum sits on
/// the far face of the horizon along a population axis.
pub fn drift_supremum(network: &ReactionNetwork, g: &Polynomial, horizon: &[(f64, f64)]) -> Result<f64, LyapunovError> {
    let upper = Drift::new(network, g)?.upper_polynomial()?;
    let (c, point) = maximize(&upper, horizon);
    for &i in &network.aggregated_axes() {
        if horizon[i].1 > horizon[i].0 && point[i] >= horizon[i].1 {
            return Err(LyapunovError::NotCertificate { point });
        }
    }
    Ok(c)
}

/// Validated Lyapunov data: `g`, threshold `ε_ℓ` and drift supremum `c`.
#[derive(Debug, Clone)]
pub struct LyapunovSpec {
    pub g: Polynomial,
    pub epsilon_l: f64,
    pub c: f64,
    pub horizon: i64,
}

impl LyapunovSpec {
    pub fn new(network: &ReactionNetwork, g: Polynomial, epsilon_l: f64, horizon: i64) -> Result<Self, LyapunovError> {
        if !(epsilon_l > 0.0 && epsilon_l < 1.0) {
            return Err(LyapunovError::InvalidEpsilon(epsilon_l));
        }
        let c = drift_supremum(network, &g, &horizon_box(network, horizon))?;
        if c <= 0.0 {
            return Err(LyapunovError::NonPositiveSupremum(c));
        }
        Ok(LyapunovSpec { g, epsilon_l, c, horizon })
    }

    /// Uses the network's own Lyapunov function, or squared L2 if it has none.
    pub fn for_network(network: &ReactionNetwork, epsilon_l: f64) -> Result<Self, LyapunovError> {
        let g = network.lyapunov().cloned().unwrap_or_else(|| squared_l2(network.num_species()));
        LyapunovSpec::new(network, g, epsilon_l, DEFAULT_HORIZON)
    }

    /// Drift threshold `c − c/ε_ℓ`; the Lyapunov set is where `d` exceeds it.
    pub fn threshold(&self) -> f64 {
        self.c - self.c / self.epsilon_l
    }
}

/// Per-species inclusive upper bounds of a box containing the Lyapunov set.
///
/// Along each population axis the largest `t` with
/// `max_{x: x_i = t} d(x) > c − c/ε_ℓ` is located by bisection, the other
/// coordinates ranging over the horizon. Mode species get their largest
/// declared value.
pub fn lyapunov_box(network: &ReactionNetwork, spec: &LyapunovSpec) -> Result<Vec<i64>, LyapunovError> {
    let upper = Drift::new(network, &spec.g)?.upper_polynomial()?;
    let horizon = horizon_box(network, spec.horizon);
    let threshold = spec.threshold();
    let mut out: Vec<i64> = horizon.iter().map(|&(_, hi)| hi as i64).collect();
    let names = network.species_names();
    for i in network.aggregated_axes() {
        let section_max = |t: f64| {
            let mut b = horizon.clone();
            b[i] = (t, t);
            maximize(&upper, &b).0
        };
        let (_, argmax) = maximize(&upper, &horizon);
        let mut lo = argmax[i].floor().max(0.0);
        let mut hi = horizon[i].1;
        if section_max(hi) > threshold {
            return Err(LyapunovError::Unbounded(names[i].clone()));
        }
        if section_max(lo) <= threshold {
            lo = 0.0;
        }
        while hi - lo > 1.0 {
            let mid = ((lo + hi) / 2.0).floor();
            if section_max(mid) > threshold {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out[i] = lo as i64;
    }
    Ok(out)
}
