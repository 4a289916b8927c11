//! Damped least squares (Levenberg-Marquardt) for the few-parameter smile
//! fits.
//!
//! Deliberately small: dense linear algebra on 2–3 parameters, a numerical
//! central-difference Jacobian, box bounds enforced by clamping, and a
//! residual callback that may declare a trial point infeasible by returning
//! `None` (the step is then rejected exactly like an uphill one). Entirely
//! deterministic: identical inputs produce bit-identical iterates.

use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Relative parameter-step convergence threshold.
    pub step_tol: f64,
    /// Infinity-norm gradient convergence threshold.
    pub grad_tol: f64,
    /// Initial damping factor.
    pub lambda0: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { max_iter: 500, step_tol: 1e-10, grad_tol: 1e-12, lambda0: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals at the solution.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Row-major `n x n` covariance of the parameters,
    /// `ssr/(m - n) * (J^T J)^{-1}`; zeros when `m <= n` or the normal
    /// matrix is singular.
    pub covariance: Vec<f64>,
}

/// Minimize `|r(p)|^2` starting from `p0`, keeping `p` inside `bounds`.
///
/// `residuals` returns `None` for infeasible trial points. The initial point
/// must be feasible.
pub fn levenberg_marquardt<F>(
    residuals: F,
    p0: &[f64],
    bounds: &[(f64, f64)],
    cfg: &LmConfig,
) -> Result<LmResult>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = p0.len();
    assert_eq!(bounds.len(), n, "one bound pair per parameter");

    let clamp = |p: &mut [f64]| {
        for (v, &(lo, hi)) in p.iter_mut().zip(bounds) {
            *v = v.clamp(lo, hi);
        }
    };

    let mut p: Vec<f64> = p0.into();
    clamp(&mut p);
    let mut r = residuals(&p)
        .ok_or_else(|| Error::invalid("least squares: infeasible starting point"))?;
    let m = r.len();
    if m < n {
        return Err(Error::invalid(alloc::format!(
            "least squares: {m} residuals cannot determine {n} parameters"
        )));
    }
    let mut ssr = norm2(&r);
    let mut lambda = cfg.lambda0;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..cfg.max_iter {
        iterations = iter + 1;
        let jac = jacobian(&residuals, &p, &r, bounds);
        let grad = jt_r(&jac, &r, n);
        if grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < cfg.grad_tol {
            converged = true;
            break;
        }
        let jtj = jt_j(&jac, n);

        let mut accepted = false;
        for _ in 0..40 {
            // (J^T J + lambda diag(J^T J)) step = -grad
            let mut a = jtj.clone();
            for k in 0..n {
                let d = jtj[k * n + k];
                a[k * n + k] = d + lambda * d.max(1e-300);
            }
            let step = match solve(&mut a, &grad, n) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial: Vec<f64> = p.iter().zip(&step).map(|(v, s)| v - s).collect();
            clamp(&mut trial);
            let rel_step = trial
                .iter()
                .zip(&p)
                .map(|(t, v)| (t - v).abs() / (v.abs() + 1e-12))
                .fold(0.0, f64::max);
            match residuals(&trial) {
                Some(rt) => {
                    let st = norm2(&rt);
                    if st < ssr {
                        p = trial;
                        r = rt;
                        ssr = st;
                        lambda = (lambda * 0.1).max(1e-14);
                        accepted = true;
                        if rel_step < cfg.step_tol {
                            converged = true;
                        }
                        break;
                    }
                }
                None => {}
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step found at any damping: the iterate is as good
            // as the model can make it
            converged = true;
            break;
        }
    }

    let jac = jacobian(&residuals, &p, &r, bounds);
    let covariance = covariance(&jac, n, m, ssr);
    Ok(LmResult { params: p, residuals: r, ssr, iterations, converged, covariance })
}

fn norm2(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Central-difference Jacobian, falling back to one-sided differences when a
/// perturbed point is infeasible. Row-major `m x n`.
fn jacobian<F>(f: &F, p: &[f64], r0: &[f64], bounds: &[(f64, f64)]) -> Vec<f64>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = p.len();
    let m = r0.len();
    let mut jac = alloc::vec![0.0; m * n];
    let mut work = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * (p[j].abs() + 1e-6);
        let hi = (p[j] + h).min(bounds[j].1);
        let lo = (p[j] - h).max(bounds[j].0);
        work[j] = hi;
        let r_hi = f(&work);
        work[j] = lo;
        let r_lo = f(&work);
        work[j] = p[j];
        let (ra, rb, denom) = match (r_hi, r_lo) {
            (Some(a), Some(b)) => (a, b, hi - lo),
            (Some(a), None) => (a, r0.to_vec(), hi - p[j]),
            (None, Some(b)) => (r0.to_vec(), b, p[j] - lo),
            (None, None) => continue,
        };
        if denom == 0.0 {
            continue;
        }
        for i in 0..m {
            jac[i * n + j] = (ra[i] - rb[i]) / denom;
        }
    }
    jac
}

fn jt_r(jac: &[f64], r: &[f64], n: usize) -> Vec<f64> {
    let m = r.len();
    let mut out = alloc::vec![0.0; n];
    for i in 0..m {
        for j in 0..n {
            out[j] += jac[i * n + j] * r[i];
        }
    }
    out
}

fn jt_j(jac: &[f64], n: usize) -> Vec<f64> {
    let m = jac.len() / n;
    let mut out = alloc::vec![0.0; n * n];
    for i in 0..m {
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] += jac[i * n + a] * jac[i * n + b];
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting on the tiny normal system;
/// `a` is consumed. Returns `None` for a singular matrix.
fn solve(a: &mut [f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut x = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        if a[piv * n + col].abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            x.swap(col, piv);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * x[k];
        }
        x[col] = acc / a[col * n + col];
    }
    Some(x)
}

fn covariance(jac: &[f64], n: usize, m: usize, ssr: f64) -> Vec<f64> {
    let mut cov = alloc::vec![0.0; n * n];
    if m <= n {
        return cov;
    }
    let jtj = jt_j(jac, n);
    let s2 = ssr / (m - n) as f64;
    // invert column by column
    for col in 0..n {
        let mut a = jtj.clone();
        let mut e = alloc::vec![0.0; n];
        e[col] = 1.0;
        match solve(&mut a, &e, n) {
            Some(x) => {
                for row in 0..n {
                    cov[row * n + col] = s2 * x[row];
                }
            }
            None => return alloc::vec![0.0; n * n],
        }
    }
    cov
}
