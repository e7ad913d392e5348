//! Right-preconditioned BiCGSTAB.

#[derive(Debug, Clone, Copy)]
pub struct KrylovSettings {
    pub max_iterations: usize,
    /// Absolute tolerance on the residual 2-norm.
    pub tolerance: f64,
    /// Stop after this many iterations without a new best residual.
    pub stagnation: usize,
}

impl Default for KrylovSettings {
    fn default() -> Self {
        KrylovSettings { max_iterations: 10_000, tolerance: 1e-16, stagnation: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterations between recomputations of the true residual.
const REPLACE_EVERY: usize = 50;
/// Restart when `|r̂·r|` falls below this fraction of `‖r̂‖‖r‖`.
const BREAKDOWN: f64 = 1e-10;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` given `A` and the preconditioner `M⁻¹` as closures.
/// Returns the iterate with the smallest residual seen.
pub fn bicgstab(
    apply: impl Fn(&[f64], &mut [f64]),
    precondition: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x0: Vec<f64>,
    settings: KrylovSettings,
) -> KrylovOutcome {
    let n = b.len();
    let mut x = x0;
    let mut tmp = vec![0.0; n];
    apply(&x, &mut tmp);
    let mut r: Vec<f64> = b.iter().zip(&tmp).map(|(b, ax)| b - ax).collect();
    let mut r_hat = r.clone();
    let mut best = KrylovOutcome { x: x.clone(), residual: norm(&r), iterations: 0, converged: false };
    if best.residual <= settings.tolerance {
        best.converged = true;
        return best;
    }
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut since_best = 0;
    let mut restarts = 0;
    for it in 1..=settings.max_iterations {
        let mut rho_new = dot(&r_hat, &r);
        let near_breakdown = rho_new.abs() <= BREAKDOWN * norm(&r_hat) * norm(&r);
        if near_breakdown || omega == 0.0 || !rho_new.is_finite() {
            // restart the recurrence with the current residual as shadow
            restarts += 1;
            if restarts > 200 {
                break;
            }
            r_hat.copy_from_slice(&r);
            rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                break;
            }
            (rho, alpha, omega) = (1.0, 1.0, 1.0);
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
        }
        precondition(&p, &mut y);
        apply(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            omega = 0.0;
            continue;
        }
        alpha = rho / denom;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        precondition(&s, &mut z);
        apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        let mut res = norm(&r);
        if !res.is_finite() {
            break;
        }
        // the recursive residual drifts from b - Ax; replace it periodically
        // and before trusting it
        let claimed = res <= settings.tolerance;
        if claimed || it % REPLACE_EVERY == 0 {
            apply(&x, &mut tmp);
            for k in 0..n {
                r[k] = b[k] - tmp[k];
            }
            res = norm(&r);
            if claimed && res > settings.tolerance {
                omega = 0.0;
            }
        }
        if res < best.residual {
            best.residual = res;
            best.x.copy_from_slice(&x);
            best.iterations = it;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if res <= settings.tolerance {
            best.converged = true;
            break;
        }
        if since_best >= settings.stagnation {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [[4.0, 1.0, 0.0], [2.0, 5.0, 1.0], [0.0, 1.0, 3.0]];
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..3 {
                y[i] = (0..3).map(|j| a[i][j] * x[j]).sum();
            }
        };
        let b = [1.0, 2.0, 3.0];
        let out = bicgstab(
            apply,
            |x: &[f64], y: &mut [f64]| {
                for (i, d) in [4.0, 5.0, 3.0].iter().enumerate() {
                    y[i] = x[i] / d;
                }
            },
            &b,
            vec![0.0; 3],
            KrylovSettings { tolerance: 1e-14, ..Default::default() },
        );
        assert!(out.converged);
        let mut ax = [0.0; 3];
        apply(&out.x, &mut ax);
        for (p, q) in ax.iter().zip(b) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
