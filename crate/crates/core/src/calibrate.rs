//! Unconditional (three-parameter) and conditional (tail-constrained)
//! least-squares smile calibration, historical-statistics extrapolation
//! across maturities, and the side-by-side fit comparison.
//!
//! The conditional mode eliminates the saturation ratio: with a measured
//! historical decay `mu_H` and volatility `sigma_H`, every trial point
//! derives `chi = 2 f(rho) / (mu_H sigma_H)`, so the optimizer runs over
//! `(g, rho)` only and the fitted smile reproduces the historical tail
//! decay by construction.

use alloc::string::String;
use alloc::vec::Vec;

use crate::density::{density_grid, interior_minima, value_at_risk, DensityGrid, VarResult};
use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::historical::HistoricalStats;
use crate::lm::{levenberg_marquardt, LmConfig};
use crate::pricing::{delta_to_x, DeltaConvention, Moneyness};
use crate::smile::{smile_sigma, SmileParams};
use crate::tail::f_of_rho;

/// One implied-volatility observation in the log-moneyness coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolQuote {
    pub x: Moneyness,
    pub sigma: f64,
    /// Non-negative least-squares weight, 1 by default.
    pub weight: f64,
}

impl VolQuote {
    pub fn new(x: Moneyness, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !x.0.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "quote needs finite x and sigma > 0, got x={}, sigma={sigma}",
                x.0
            )));
        }
        Ok(VolQuote { x, sigma, weight: 1.0 })
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(Error::invalid("quote weight must be finite and >= 0"));
        }
        self.weight = weight;
        Ok(self)
    }

    /// Ingest a delta-indexed quote: the delta is mapped to `x` with the
    /// quote's own volatility, in a single pass.
    pub fn from_delta(
        delta: f64,
        sigma: f64,
        maturity: f64,
        conv: DeltaConvention,
    ) -> Result<Self> {
        let x = delta_to_x(delta, sigma, maturity, conv)?;
        VolQuote::new(x, sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    Unconditional,
    Conditional,
}

/// Standard errors of the natural parameter triple, from the linearized
/// covariance at the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamErrors {
    pub g: f64,
    pub chi: f64,
    pub n: f64,
}

/// A converged smile fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: SmileParams,
    pub param_errors: ParamErrors,
    /// Weighted root-mean-square residual in volatility units.
    pub rms: f64,
    pub mode: FitMode,
    /// `|chi mu_H sigma_H - 2 f(rho)|` at the optimum; conditional fits
    /// only.
    pub constraint_residual: Option<f64>,
    /// Degeneracy and feasibility notes, in the order they were detected.
    pub warnings: Vec<String>,
    pub iterations: usize,
}

struct Prepared {
    xs: Vec<f64>,
    sigmas: Vec<f64>,
    sqrt_w: Vec<f64>,
    weight_sum: f64,
    g0: f64,
    chi0: f64,
}

fn prepare(quotes: &[VolQuote], maturity: f64, min_quotes: usize) -> Result<Prepared> {
    if !(maturity > 0.0) {
        return Err(Error::invalid("maturity must be > 0"));
    }
    if quotes.len() < min_quotes {
        return Err(Error::InsufficientData {
            message: alloc::format!(
                "{} quotes cannot determine the fit, need at least {min_quotes}",
                quotes.len()
            ),
        });
    }
    let mut xs = Vec::with_capacity(quotes.len());
    let mut sigmas = Vec::with_capacity(quotes.len());
    let mut sqrt_w = Vec::with_capacity(quotes.len());
    let mut weight_sum = 0.0;
    let mut sig_min = f64::INFINITY;
    let mut sig_max = 0.0f64;
    for q in quotes {
        if !(q.sigma > 0.0) || !q.sigma.is_finite() || !q.x.0.is_finite() || !(q.weight >= 0.0) {
            return Err(Error::invalid("malformed quote"));
        }
        xs.push(q.x.0);
        sigmas.push(q.sigma);
        sqrt_w.push(q.weight.sqrt());
        weight_sum += q.weight;
        sig_min = sig_min.min(q.sigma);
        sig_max = sig_max.max(q.sigma);
    }
    if !(weight_sum > 0.0) {
        return Err(Error::invalid("all quote weights are zero"));
    }
    let g0 = sig_min;
    let x_min0 = -0.5 * g0 * g0 * maturity;
    let left = xs.iter().filter(|&&x| x < x_min0).count();
    let right = xs.iter().filter(|&&x| x > x_min0).count();
    if left == 0 || right == 0 {
        return Err(Error::InsufficientData {
            message: String::from(
                "quotes must span both sides of the smile minimum to identify the width",
            ),
        });
    }
    Ok(Prepared {
        xs,
        sigmas,
        sqrt_w,
        weight_sum,
        g0,
        chi0: (sig_max / sig_min).clamp(1.0, 10.0),
    })
}

/// Width-prior starting point: `sqrt(n) = 2.65 g sqrt(T)`, i.e. `rho = 2.65^2`.
const RHO_INIT: f64 = 7.0225;

fn smile_residuals(prep: &Prepared, p: &SmileParams) -> Vec<f64> {
    prep.xs
        .iter()
        .zip(&prep.sigmas)
        .zip(&prep.sqrt_w)
        .map(|((&x, &s), &w)| w * (smile_sigma(p, Moneyness(x)) - s))
        .collect()
}

fn weighted_rms(ssr: f64, weight_sum: f64) -> f64 {
    (ssr / weight_sum).sqrt()
}

const CHI_BOUND_WARN: &str = "chi sits at its lower bound 1: flat quotes leave the width n unidentified";
const CHI_INFEASIBLE_WARN: &str =
    "historical decay steeper than flat-smile Gaussian: chi < 1 encountered and rejected during the fit";

/// Weighted least squares of the smile over `(g, chi, n)`.
///
/// Internally the optimizer runs over `(g, chi, rho)` with `n = rho g^2 T`,
/// which keeps the width parameter comparable across maturities. Bounds:
/// `g` in (0, 5], `chi` in [1, 10], `rho > 0`.
pub fn fit_unconditional(
    quotes: &[VolQuote],
    maturity: f64,
    init: Option<SmileParams>,
) -> Result<FitResult> {
    let prep = prepare(quotes, maturity, 4)?;
    let p0 = match &init {
        Some(p) => alloc::vec![p.g, p.chi, p.rho()],
        None => alloc::vec![prep.g0, prep.chi0, RHO_INIT],
    };
    let bounds = [(1e-8, 5.0), (1.0, 10.0), (1e-8, 1e6)];
    let residuals = |v: &[f64]| -> Option<Vec<f64>> {
        let p = SmileParams {
            g: v[0],
            chi: v[1],
            n: v[2] * v[0] * v[0] * maturity,
            maturity,
        };
        Some(smile_residuals(&prep, &p))
    };
    let out = levenberg_marquardt(residuals, &p0, &bounds, &LmConfig::default())?;
    if !out.converged {
        return Err(Error::Convergence {
            message: alloc::format!(
                "unconditional fit stopped after {} iterations at (g, chi, rho) = ({}, {}, {})",
                out.iterations,
                out.params[0],
                out.params[1],
                out.params[2]
            ),
        });
    }
    let (g, chi, rho) = (out.params[0], out.params[1], out.params[2]);
    let params = SmileParams::new(g, chi, rho * g * g * maturity, maturity)?;
    let mut warnings = Vec::new();
    if chi - 1.0 < 1e-6 {
        warnings.push(String::from(CHI_BOUND_WARN));
    }
    // covariance of (g, chi, rho) -> errors of (g, chi, n)
    let v = &out.covariance;
    let dn_dg = 2.0 * rho * g * maturity;
    let dn_drho = g * g * maturity;
    let var_n =
        dn_dg * dn_dg * v[0] + dn_drho * dn_drho * v[8] + 2.0 * dn_dg * dn_drho * v[2];
    Ok(FitResult {
        params,
        param_errors: ParamErrors {
            g: v[0].max(0.0).sqrt(),
            chi: v[4].max(0.0).sqrt(),
            n: var_n.max(0.0).sqrt(),
        },
        rms: weighted_rms(out.ssr, prep.weight_sum),
        mode: FitMode::Unconditional,
        constraint_residual: None,
        warnings,
        iterations: out.iterations,
    })
}

/// The saturation ratio implied by a historical decay measurement:
/// `chi = 2 f(n / (g^2 T)) / (mu_H sigma_H)`.
///
/// The raw value is returned even when it falls below 1 (callers treat that
/// as an infeasibility signal, never as a value to clamp).
pub fn conditional_chi(mu_h: f64, sigma_h: f64, g: f64, n: f64, maturity: f64) -> Result<f64> {
    if !(mu_h > 0.0) || !(sigma_h > 0.0) || !(g > 0.0) || !(n > 0.0) || !(maturity > 0.0) {
        return Err(Error::invalid(
            "conditional_chi requires positive mu_H, sigma_H, g, n and maturity",
        ));
    }
    Ok(2.0 / (mu_h * sigma_h) * f_of_rho(n / (g * g * maturity))?)
}

/// Tail-constrained least squares over `(g, n)` with `chi` derived from the
/// historical decay at every trial point. Trial points that would need
/// `chi < 1` are rejected as infeasible (and reported in the warnings),
/// never clamped.
pub fn fit_conditional(
    quotes: &[VolQuote],
    maturity: f64,
    hist: &HistoricalStats,
    init: Option<SmileParams>,
) -> Result<FitResult> {
    if !(hist.mu_h > 0.0) || !(hist.sigma_h > 0.0) {
        return Err(Error::invalid("historical stats must carry positive mu_H and sigma_H"));
    }
    let prep = prepare(quotes, maturity, 4)?;
    let scale = 2.0 / (hist.mu_h * hist.sigma_h);
    let chi_of = |rho: f64| -> f64 { scale * f_of_rho(rho).unwrap_or(f64::NAN) };

    let mut rho0 = match &init {
        Some(p) => p.rho(),
        None => RHO_INIT,
    };
    // the derived chi grows with rho; walk right until feasible
    let mut guard = 0;
    while chi_of(rho0) < 1.0 {
        rho0 *= 2.0;
        guard += 1;
        if rho0 > 1e6 || guard > 60 {
            return Err(Error::NoSolution {
                message: String::from(
                    "no width gives chi >= 1: historical decay steeper than any admissible smile",
                ),
            });
        }
    }
    let g0 = match &init {
        Some(p) => p.g,
        None => prep.g0,
    };

    let infeasible_hits = core::cell::Cell::new(0u32);
    let residuals = |v: &[f64]| -> Option<Vec<f64>> {
        let (g, rho) = (v[0], v[1]);
        let chi = chi_of(rho);
        if !chi.is_finite() {
            return None;
        }
        if chi < 1.0 {
            infeasible_hits.set(infeasible_hits.get() + 1);
            return None;
        }
        let p = SmileParams { g, chi, n: rho * g * g * maturity, maturity };
        Some(smile_residuals(&prep, &p))
    };
    let bounds = [(1e-8, 5.0), (1e-8, 1e6)];
    let out = levenberg_marquardt(residuals, &[g0, rho0], &bounds, &LmConfig::default())?;
    if !out.converged {
        return Err(Error::Convergence {
            message: alloc::format!(
                "conditional fit stopped after {} iterations at (g, rho) = ({}, {})",
                out.iterations,
                out.params[0],
                out.params[1]
            ),
        });
    }
    let (g, rho) = (out.params[0], out.params[1]);
    let n = rho * g * g * maturity;
    let chi = conditional_chi(hist.mu_h, hist.sigma_h, g, n, maturity)?;
    let params = SmileParams::new(g, chi, n, maturity)?;
    let constraint_residual =
        (chi * hist.mu_h * hist.sigma_h - 2.0 * f_of_rho(params.rho())?).abs();

    let mut warnings = Vec::new();
    if infeasible_hits.get() > 0 {
        warnings.push(String::from(CHI_INFEASIBLE_WARN));
    }
    if chi - 1.0 < 1e-6 {
        warnings.push(String::from(CHI_BOUND_WARN));
    }
    if chi > 10.0 {
        warnings.push(alloc::format!(
            "derived chi = {chi:.3} exceeds the unconditional bound 10"
        ));
    }

    // covariance of (g, rho) -> errors of (g, chi, n)
    let v = &out.covariance;
    let h = 1e-6 * rho.max(1e-6);
    let dchi_drho = (chi_of(rho + h) - chi_of(rho - h)) / (2.0 * h);
    let dn_dg = 2.0 * rho * g * maturity;
    let dn_drho = g * g * maturity;
    let var_n =
        dn_dg * dn_dg * v[0] + dn_drho * dn_drho * v[3] + 2.0 * dn_dg * dn_drho * v[1];
    Ok(FitResult {
        params,
        param_errors: ParamErrors {
            g: v[0].max(0.0).sqrt(),
            chi: (dchi_drho * dchi_drho * v[3]).max(0.0).sqrt(),
            n: var_n.max(0.0).sqrt(),
        },
        rms: weighted_rms(out.ssr, prep.weight_sum),
        mode: FitMode::Conditional,
        constraint_residual: Some(constraint_residual),
        warnings,
        iterations: out.iterations,
    })
}

/// Rescale historical statistics from their measurement lag to another
/// maturity: `mu` scales as `1/sqrt(T)` and `sigma` as `sqrt(T)`, so the
/// product `mu_H sigma_H` is invariant.
pub fn extrapolate_hist(hist: &HistoricalStats, t2_days: u32) -> Result<HistoricalStats> {
    if hist.lag_days == 0 || t2_days == 0 {
        return Err(Error::invalid("extrapolation needs positive lags"));
    }
    let ratio = hist.lag_days as f64 / t2_days as f64;
    Ok(HistoricalStats {
        sigma_h: hist.sigma_h / ratio.sqrt(),
        mu_h: hist.mu_h * ratio.sqrt(),
        subgroup_size: hist.subgroup_size,
        lag_days: t2_days,
        rms_residual: hist.rms_residual,
    })
}

/// Grid span (in units of `g sqrt(T)` around the smile minimum) and point
/// count used for the comparison grids.
const COMPARE_SPAN: f64 = 10.0;
const COMPARE_POINTS: usize = 512;

/// Both calibrations of the same quotes, with their implied densities,
/// loss thresholds and spurious-minimum diagnostics.
#[derive(Debug, Clone)]
pub struct FitComparison {
    pub unconditional: FitResult,
    pub conditional: FitResult,
    pub grid_unconditional: DensityGrid,
    pub grid_conditional: DensityGrid,
    /// VaR of each fit; negative-density integrity failures are preserved
    /// per side instead of aborting the comparison.
    pub var_unconditional: Result<VarResult>,
    pub var_conditional: Result<VarResult>,
    /// `|lambda_u - lambda_c| / lambda_u` when both thresholds exist.
    pub var_rel_diff: Option<f64>,
    /// Interior density minima within three half-widths right of each
    /// smile minimum.
    pub minima_unconditional: Vec<f64>,
    pub minima_conditional: Vec<f64>,
}

fn fit_grid(params: &SmileParams) -> Result<DensityGrid> {
    let span = COMPARE_SPAN * params.g * params.maturity.sqrt();
    density_grid(
        params,
        Moneyness(params.x_min() - span),
        Moneyness(params.x_min() + span),
        COMPARE_POINTS,
    )
}

/// Run both fits and compare their risk pictures at the given VaR level.
pub fn compare_fits(
    quotes: &[VolQuote],
    maturity: f64,
    hist: &HistoricalStats,
    level: f64,
) -> Result<FitComparison> {
    let unconditional = fit_unconditional(quotes, maturity, None)?;
    let conditional = fit_conditional(quotes, maturity, hist, None)?;

    let grid_u = fit_grid(&unconditional.params)?;
    let grid_c = fit_grid(&conditional.params)?;

    let var_u = value_at_risk(&unconditional.params, level);
    let var_c = value_at_risk(&conditional.params, level);
    let var_rel_diff = match (&var_u, &var_c) {
        (Ok(a), Ok(b)) if a.lambda > 0.0 => Some((a.lambda - b.lambda).abs() / a.lambda),
        _ => None,
    };

    let mins_u = {
        let p = &unconditional.params;
        interior_minima(&grid_u, p.x_min(), p.x_min() + 3.0 * p.half_width())
    };
    let mins_c = {
        let p = &conditional.params;
        interior_minima(&grid_c, p.x_min(), p.x_min() + 3.0 * p.half_width())
    };

    Ok(FitComparison {
        unconditional,
        conditional,
        grid_unconditional: grid_u,
        grid_conditional: grid_c,
        var_unconditional: var_u,
        var_conditional: var_c,
        var_rel_diff,
        minima_unconditional: mins_u,
        minima_conditional: mins_c,
    })
}
