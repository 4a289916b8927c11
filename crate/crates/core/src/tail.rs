//! Exponential tail characterisation of the implied CCDF: the transition
//! window, empirical straight-line fits in semi-log space, the analytic
//! two-point decay model and its validation over the reference parameter
//! box.
//!
//! On the transition window the implied CCDF is approximately
//! `exp(-mu |x|)`. For a flat smile the chord of the log-CCDF across the
//! window can be written in closed form, `mu_1 = 2 f(rho) / (g sqrt(T))`
//! with
//!
//! ```text
//! f(rho) = ln[ erfc(sqrt(rho/8)) / erfc(sqrt(rho/2)) ] / sqrt(rho)
//! ```
//!
//! and the saturation ratio is folded in as the inverse proportionality
//! `mu_chi = mu_1 / chi`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::density::{density_grid, DensityGrid};
use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::pricing::Moneyness;
use crate::smile::SmileParams;
use crate::special::ln_erfc;

/// The window `sqrt(n)/2 <= u <= sqrt(n)` in which the smile climbs from
/// 20% to 50% of its rise, measured from the smile minimum: fits run on
/// `x = center + u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRegion {
    /// Window start in the minimum-centred coordinate (`sqrt(n)/2`).
    pub u_lo: f64,
    /// Window end in the minimum-centred coordinate (`sqrt(n)`).
    pub u_hi: f64,
    /// Abscissa of the smile minimum the window is measured from.
    pub center: f64,
}

impl TransitionRegion {
    /// The transition window of a given smile.
    pub fn from_smile(p: &SmileParams) -> Self {
        let sq = p.half_width();
        TransitionRegion { u_lo: 0.5 * sq, u_hi: sq, center: p.x_min() }
    }

    /// Window start on the x axis.
    pub fn x_lo(&self) -> f64 {
        self.center + self.u_lo
    }

    /// Window end on the x axis.
    pub fn x_hi(&self) -> f64 {
        self.center + self.u_hi
    }
}

/// Which tail of the distribution to fit. `Right` fits `ln E(x)` on the
/// window itself; `Left` fits the mirrored loss-side window using the CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailSide {
    #[default]
    Right,
    Left,
}

/// An estimated exponential decay rate with its fit diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailEstimate {
    /// Decay rate of `exp(-mu |x|)`; positive for decaying tails.
    pub mu: f64,
    /// Fitted log-CCDF at the window start.
    pub intercept: f64,
    /// Root-mean-square residual of the straight-line fit in log space.
    pub rms_residual: f64,
    pub window: TransitionRegion,
}

/// The decay-model shape function. Evaluated through [`ln_erfc`] so the
/// ratio of vanishing tail probabilities stays exact far beyond the point
/// where `erfc` underflows (no cancellation up to `rho = 1e6` and beyond).
pub fn f_of_rho(rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::invalid(alloc::format!("f(rho) requires rho > 0, got {rho}")));
    }
    Ok((ln_erfc((rho / 8.0).sqrt()) - ln_erfc((rho / 2.0).sqrt())) / rho.sqrt())
}

/// Flat-smile decay rate `mu_1 = 2 f(rho) / (g sqrt(T))`: exactly the
/// two-point slope of the Gaussian log-CCDF across the transition window.
pub fn mu_flat(g: f64, maturity: f64, rho: f64) -> Result<f64> {
    if !(g > 0.0) || !(maturity > 0.0) {
        return Err(Error::invalid("mu_flat requires g > 0 and maturity > 0"));
    }
    Ok(2.0 * f_of_rho(rho)? / (g * maturity.sqrt()))
}

/// Model decay rate of a smile: `mu_chi = mu_1 / chi` at `rho = n/(g^2 T)`.
pub fn mu_predicted(p: &SmileParams) -> Result<f64> {
    Ok(mu_flat(p.g, p.maturity, p.rho())? / p.chi)
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - (intercept + slope * x);
        ss += r * r;
    }
    (intercept, slope, (ss / n).sqrt())
}

/// Ordinary least squares of the log tail probability against `x` on the
/// window; `mu` is the negated slope on the right tail and the slope itself
/// on the mirrored left tail.
///
/// # Errors
/// Fails if fewer than 8 grid points fall inside the window or the tail
/// probability is not strictly positive there.
pub fn fit_tail(grid: &DensityGrid, window: &TransitionRegion, side: TailSide) -> Result<TailEstimate> {
    if !(window.u_lo > 0.0 && window.u_hi > window.u_lo) {
        return Err(Error::invalid("transition window must satisfy 0 < u_lo < u_hi"));
    }
    let (w_lo, w_hi) = match side {
        TailSide::Right => (window.x_lo(), window.x_hi()),
        TailSide::Left => (window.center - window.u_hi, window.center - window.u_lo),
    };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &x) in grid.xs.iter().enumerate() {
        if x < w_lo || x > w_hi {
            continue;
        }
        let prob = match side {
            TailSide::Right => grid.ccdf[i],
            TailSide::Left => 1.0 - grid.ccdf[i],
        };
        if !(prob > 0.0) {
            return Err(Error::fit(alloc::format!(
                "tail probability not positive at x = {x} (got {prob})"
            )));
        }
        xs.push(x);
        ys.push(prob.ln());
    }
    if xs.len() < 8 {
        return Err(Error::fit(alloc::format!(
            "only {} grid points inside the window [{w_lo}, {w_hi}], need at least 8",
            xs.len()
        )));
    }

    let (a, b, rms) = ols(&xs, &ys);
    let mu = match side {
        TailSide::Right => -b,
        TailSide::Left => b,
    };
    Ok(TailEstimate {
        mu,
        intercept: a + b * xs[0],
        rms_residual: rms,
        window: *window,
    })
}

/// Parameter box swept by [`validation_sweep`]; defaults to the reference
/// simulation ranges (`g` 0.03–0.5, `rho` 2.5–10, `T` 1–1080 days, `chi`
/// 1.01–3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepBounds {
    pub g: (f64, f64),
    pub rho: (f64, f64),
    pub t_days: (f64, f64),
    pub chi: (f64, f64),
}

impl Default for SweepBounds {
    fn default() -> Self {
        SweepBounds {
            g: (0.03, 0.5),
            rho: (2.5, 10.0),
            t_days: (1.0, 1080.0),
            chi: (1.01, 3.0),
        }
    }
}

/// One fitted/predicted pair from the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub g: f64,
    pub chi: f64,
    pub rho: f64,
    pub t_days: f64,
    pub mu_fit: f64,
    pub mu_pred: f64,
    pub rel_err: f64,
}

/// A parameter combination whose tail fit could not be carried out (for
/// instance because the implied CCDF turns negative inside the window).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub g: f64,
    pub chi: f64,
    pub rho: f64,
    pub t_days: f64,
    pub message: String,
}

/// Sweep outcome. `relative_mse` is the mean squared error normalized by
/// the mean squared predicted rate, `sum (mu_fit - mu_pred)^2 / sum
/// mu_pred^2`; `rms_relative_error` is the plain root-mean-square of the
/// per-point relative errors. Both are computed over successful points.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub failures: Vec<SweepFailure>,
    pub relative_mse: f64,
    pub rms_relative_error: f64,
}

impl SweepReport {
    /// CSV rendering with the fixed column order
    /// `g,chi,rho,T_days,mu_fit,mu_pred,rel_err` (successful points only).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("g,chi,rho,T_days,mu_fit,mu_pred,rel_err\n");
        for p in &self.points {
            out.push_str(&alloc::format!(
                "{},{},{},{},{},{},{}\n",
                p.g, p.chi, p.rho, p.t_days, p.mu_fit, p.mu_pred, p.rel_err
            ));
        }
        out
    }
}

fn axis(lo: f64, hi: f64, samples: usize, log_spaced: bool) -> Vec<f64> {
    if samples == 1 || lo == hi {
        return alloc::vec![lo];
    }
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let t = i as f64 / (samples - 1) as f64;
        if log_spaced {
            out.push((lo.ln() + t * (hi.ln() - lo.ln())).exp());
        } else {
            out.push(lo + t * (hi - lo));
        }
    }
    out
}

/// Points per transition-window fit in the sweep.
const SWEEP_GRID_POINTS: usize = 64;

/// Fit the tail of every parameter combination on a `samples_per_axis`^4
/// grid (uniform in `g`, `chi`, `rho`; log-uniform in `T`) and compare
/// against [`mu_predicted`].
///
/// Individual combinations that cannot be fitted are recorded as failures,
/// not errors; see [`SweepReport`].
pub fn validation_sweep(bounds: &SweepBounds, samples_per_axis: usize) -> Result<SweepReport> {
    if samples_per_axis == 0 {
        return Err(Error::invalid("samples_per_axis must be at least 1"));
    }
    let reference = SweepBounds::default();
    let within = |v: (f64, f64), r: (f64, f64)| v.0 >= r.0 - 1e-12 && v.1 <= r.1 + 1e-12 && v.0 <= v.1;
    if !within(bounds.g, reference.g)
        || !within(bounds.rho, reference.rho)
        || !within(bounds.t_days, reference.t_days)
        // chi = 1 is admitted for flat-smile diagnostics
        || !within(bounds.chi, (1.0, reference.chi.1))
    {
        return Err(Error::invalid("sweep bounds must lie inside the reference box"));
    }

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for &g in &axis(bounds.g.0, bounds.g.1, samples_per_axis, false) {
        for &rho in &axis(bounds.rho.0, bounds.rho.1, samples_per_axis, false) {
            for &t_days in &axis(bounds.t_days.0, bounds.t_days.1, samples_per_axis, true) {
                for &chi in &axis(bounds.chi.0, bounds.chi.1, samples_per_axis, false) {
                    let p = SmileParams::from_rho(g, chi, rho, t_days / 365.0)?;
                    match sweep_point(&p) {
                        Ok(mu_fit) => {
                            let mu_pred = mu_predicted(&p)?;
                            points.push(SweepPoint {
                                g,
                                chi,
                                rho,
                                t_days,
                                mu_fit,
                                mu_pred,
                                rel_err: (mu_fit - mu_pred) / mu_pred,
                            });
                        }
                        Err(e) => failures.push(SweepFailure {
                            g,
                            chi,
                            rho,
                            t_days,
                            message: alloc::format!("{e}"),
                        }),
                    }
                }
            }
        }
    }

    let mut num = 0.0;
    let mut den = 0.0;
    let mut rel2 = 0.0;
    for p in &points {
        num += (p.mu_fit - p.mu_pred) * (p.mu_fit - p.mu_pred);
        den += p.mu_pred * p.mu_pred;
        rel2 += p.rel_err * p.rel_err;
    }
    let n = points.len().max(1) as f64;
    Ok(SweepReport {
        relative_mse: if den > 0.0 { num / den } else { f64::NAN },
        rms_relative_error: (rel2 / n).sqrt(),
        points,
        failures,
    })
}

fn sweep_point(p: &SmileParams) -> Result<f64> {
    let sq = p.half_width();
    let grid = density_grid(
        p,
        Moneyness(p.x_min() + 0.45 * sq),
        Moneyness(p.x_min() + 1.05 * sq),
        SWEEP_GRID_POINTS,
    )?;
    let window = TransitionRegion::from_smile(p);
    Ok(fit_tail(&grid, &window, TailSide::Right)?.mu)
}
