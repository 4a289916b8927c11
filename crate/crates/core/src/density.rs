//! The return distribution implied by smile-adjusted call prices: density,
//! complementary CDF, plot-ready grids and value-at-risk.
//!
//! Differentiating the call price twice in strike with `sigma = sigma(x)`
//! gives, after the change of variables to log-returns,
//!
//! ```text
//! P(x) = exp(-(x + x0)^2 / (2 sigma^2 T)) / sqrt(2 pi sigma^2 T) * F(x)
//! F(x) = (1 - (sigma'/sigma) x)^2 - (sigma' sigma T)^2 / 4 + sigma sigma'' T
//! ```
//!
//! with `x0 = sigma(x)^2 T / 2` and all smile quantities evaluated at `x`.
//! This is the exact strike-curvature density, so it integrates to one, but
//! `F` — and with it the density — may turn negative where the smile bends
//! too fast. Negative stretches are preserved and flagged, never clipped:
//! they are a diagnostic of the fit, and value-at-risk refuses to integrate
//! through them.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::pricing::Moneyness;
use crate::quad::integrate;
use crate::smile::{smile_sigma, smile_sigma_d1, smile_sigma_d2, SmileParams};
use crate::special::{erfc, SQRT_2};

/// Absolute tolerance for single CCDF evaluations.
const CCDF_TOL: f64 = 1e-10;
/// Per-segment tolerance when marching a cumulative integral over a grid.
const SEGMENT_TOL: f64 = 1e-12;
/// VaR bisection iteration cap.
const VAR_MAX_ITER: usize = 200;
/// Points used to scan the tail for negative density before reporting VaR.
const VAR_SCAN_POINTS: usize = 2048;

/// Multiplicative correction `F(x)` to the Gaussian kernel; identically 1
/// for a flat smile. Negative values are legal output and flag a
/// butterfly-arbitrage-like pathology of the parameters.
pub fn perturbation_factor(p: &SmileParams, x: Moneyness) -> f64 {
    let s = smile_sigma(p, x);
    let s1 = smile_sigma_d1(p, x);
    let s2 = smile_sigma_d2(p, x);
    let t = p.maturity;
    let a = 1.0 - s1 / s * x.0;
    let b = s1 * s * t;
    a * a - 0.25 * b * b + s * s2 * t
}

/// Smile-implied return density at `x`.
pub fn implied_pdf(p: &SmileParams, x: Moneyness) -> f64 {
    let s = smile_sigma(p, x);
    let v = s * s * p.maturity;
    let z = x.0 + 0.5 * v;
    (-(z * z) / (2.0 * v)).exp() / (2.0 * core::f64::consts::PI * v).sqrt()
        * perturbation_factor(p, x)
}

/// Left truncation point of the numerical integration range; beyond it the
/// density is indistinguishable from its wide Gaussian envelope.
fn trunc_lo(p: &SmileParams) -> f64 {
    p.x_min() - 12.0 * p.g * p.chi * p.maturity.sqrt()
}

fn trunc_hi(p: &SmileParams) -> f64 {
    p.x_min() + 12.0 * p.g * p.chi * p.maturity.sqrt()
}

/// CCDF of the saturated Gaussian envelope (sigma = g chi), used to close
/// the integral analytically outside the truncated range. The mass it
/// contributes there is far below every tolerance in this module.
fn envelope_ccdf(p: &SmileParams, x: f64) -> f64 {
    let s_inf = p.g * p.chi;
    let v = s_inf * s_inf * p.maturity;
    0.5 * erfc((x + 0.5 * v) / (v.sqrt() * SQRT_2))
}

/// Complementary CDF `E(x) = 1 - integral_{-inf}^x P`, absolute error at
/// most 1e-9.
///
/// # Errors
/// Propagates quadrature failures with the tolerance actually achieved.
pub fn implied_ccdf(p: &SmileParams, x: Moneyness) -> Result<f64> {
    let lo = trunc_lo(p);
    let hi = trunc_hi(p);
    if x.0 <= lo {
        return Ok(1.0 - (envelope_ccdf(p, lo) - envelope_ccdf(p, x.0)) - envelope_ccdf(p, lo));
    }
    if x.0 >= hi {
        return Ok(envelope_ccdf(p, x.0));
    }
    let below_lo = 1.0 - envelope_ccdf(p, lo);
    let q = integrate(|y| implied_pdf(p, Moneyness(y)), lo, x.0, CCDF_TOL)?;
    Ok(1.0 - below_lo - q.value)
}

/// Tabulated density and CCDF with normalization and positivity diagnostics.
///
/// `negative_mask[i]` is set where `F(x_i) < 0`; `norm_defect` is the mass
/// the grid range fails to capture, `|1 - integral of the density over
/// [xs[0], xs[last]]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub pdf: Vec<f64>,
    pub ccdf: Vec<f64>,
    pub norm_defect: f64,
    pub negative_mask: Vec<bool>,
}

impl DensityGrid {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Number of grid points with negative density.
    pub fn negative_count(&self) -> usize {
        self.negative_mask.iter().filter(|&&m| m).count()
    }

    /// CSV rendering with the fixed column order `x,pdf,ccdf,negative_flag`.
    /// Floats print with shortest round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,pdf,ccdf,negative_flag\n");
        for i in 0..self.xs.len() {
            out.push_str(&alloc::format!(
                "{},{},{},{}\n",
                self.xs[i],
                self.pdf[i],
                self.ccdf[i],
                u8::from(self.negative_mask[i])
            ));
        }
        out
    }
}

/// Evaluate density and CCDF on a uniform grid of `n_points` over
/// `[x_lo, x_hi]`.
///
/// The CCDF is anchored with one full evaluation at `xs[0]` and then marched
/// across the grid segment by segment, which keeps every point consistent
/// with [`implied_ccdf`] to well under 1e-8.
pub fn density_grid(
    p: &SmileParams,
    x_lo: Moneyness,
    x_hi: Moneyness,
    n_points: usize,
) -> Result<DensityGrid> {
    if n_points < 16 {
        return Err(Error::invalid(alloc::format!(
            "density_grid needs at least 16 points, got {n_points}"
        )));
    }
    if !(x_lo.0 < x_hi.0) || !x_lo.0.is_finite() || !x_hi.0.is_finite() {
        return Err(Error::invalid("density_grid needs finite x_lo < x_hi"));
    }

    let step = (x_hi.0 - x_lo.0) / (n_points - 1) as f64;
    let mut xs = Vec::with_capacity(n_points);
    let mut pdf = Vec::with_capacity(n_points);
    let mut negative_mask = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let x = if i == n_points - 1 { x_hi.0 } else { x_lo.0 + i as f64 * step };
        xs.push(x);
        pdf.push(implied_pdf(p, Moneyness(x)));
        negative_mask.push(perturbation_factor(p, Moneyness(x)) < 0.0);
    }

    let mut ccdf = Vec::with_capacity(n_points);
    let mut e = implied_ccdf(p, x_lo)?;
    ccdf.push(e);
    for i in 1..n_points {
        let seg = integrate(|y| implied_pdf(p, Moneyness(y)), xs[i - 1], xs[i], SEGMENT_TOL)?;
        e -= seg.value;
        ccdf.push(e);
    }

    let norm_defect = (1.0 - (ccdf[0] - ccdf[n_points - 1])).abs();
    Ok(DensityGrid { xs, pdf, ccdf, norm_defect, negative_mask })
}

/// Strict interior local minima of the tabulated density restricted to
/// `[x_lo, x_hi]`; used to spot the spurious dip that over-bent smiles
/// imprint on the implied distribution.
pub fn interior_minima(grid: &DensityGrid, x_lo: f64, x_hi: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..grid.xs.len().saturating_sub(1) {
        let x = grid.xs[i];
        if x < x_lo || x > x_hi {
            continue;
        }
        if grid.pdf[i] < grid.pdf[i - 1] && grid.pdf[i] < grid.pdf[i + 1] {
            out.push(x);
        }
    }
    out
}

/// A solved value-at-risk threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarResult {
    /// Loss threshold (positive log-return magnitude).
    pub lambda: f64,
    /// Tail mass actually attained at `-lambda`.
    pub level: f64,
    /// Estimated absolute error of the attained mass.
    pub quadrature_error: f64,
}

/// Mass of the left tail `integral_{-inf}^{-lambda} P`.
fn left_mass(p: &SmileParams, lambda: f64) -> Result<(f64, f64)> {
    let lo = trunc_lo(p);
    let x = -lambda;
    let base = 1.0 - envelope_ccdf(p, lo);
    if x <= lo {
        return Ok((1.0 - envelope_ccdf(p, x), 0.0));
    }
    let q = integrate(|y| implied_pdf(p, Moneyness(y)), lo, x, CCDF_TOL)?;
    Ok((base + q.value, q.error_estimate))
}

/// Solve `integral_{-inf}^{-lambda} P = level` for the loss threshold
/// `lambda` by bisection on `[0, 12 g chi sqrt(T) + (g chi)^2 T / 2]`.
///
/// # Errors
/// - `InvalidInput` unless `level` lies in (0, 0.5].
/// - [`Error::NegativeDensity`] if the density is negative anywhere on the
///   reported tail `[x_trunc, -lambda]`: a threshold read off a signed
///   "probability" would be meaningless, so the pathology is surfaced
///   together with the offending x-range.
pub fn value_at_risk(p: &SmileParams, level: f64) -> Result<VarResult> {
    if !(level > 0.0 && level <= 0.5) {
        return Err(Error::invalid(alloc::format!(
            "VaR level must lie in (0, 0.5], got {level}"
        )));
    }
    let s_inf = p.g * p.chi;
    let lam_max = 12.0 * s_inf * p.maturity.sqrt() + 0.5 * s_inf * s_inf * p.maturity;

    let (mass0, _) = left_mass(p, 0.0)?;
    if mass0 < level {
        return Err(Error::Convergence {
            message: alloc::format!(
                "left-tail mass at zero loss is {mass0}, below the requested level {level}"
            ),
        });
    }

    let mut lo = 0.0f64; // mass(lo) >= level
    let mut hi = lam_max; // mass(hi) < level
    let mut lambda = 0.5 * lam_max;
    let mut achieved = mass0;
    let mut quad_err = 0.0;
    for _ in 0..VAR_MAX_ITER {
        lambda = 0.5 * (lo + hi);
        let (m, e) = left_mass(p, lambda)?;
        achieved = m;
        quad_err = e;
        if (m - level).abs() <= 1e-9 {
            break;
        }
        if m >= level {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if (hi - lo) <= 1e-16 * lam_max {
            break;
        }
    }
    if (achieved - level).abs() > 1e-8 {
        return Err(Error::Convergence {
            message: alloc::format!(
                "VaR bisection stalled at lambda = {lambda}, attained mass {achieved}"
            ),
        });
    }

    // the quoted threshold is only meaningful if the tail it measures is a
    // genuine (non-negative) probability mass
    let lo_x = trunc_lo(p);
    let hi_x = -lambda;
    let mut neg_lo = f64::INFINITY;
    let mut neg_hi = f64::NEG_INFINITY;
    for i in 0..VAR_SCAN_POINTS {
        let x = lo_x + (hi_x - lo_x) * i as f64 / (VAR_SCAN_POINTS - 1) as f64;
        if perturbation_factor(p, Moneyness(x)) < 0.0 {
            neg_lo = neg_lo.min(x);
            neg_hi = neg_hi.max(x);
        }
    }
    if neg_lo.is_finite() {
        return Err(Error::NegativeDensity { x_lo: neg_lo, x_hi: neg_hi });
    }

    Ok(VarResult {
        lambda,
        level: achieved,
        quadrature_error: quad_err + (achieved - level).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::erf;
    use std::vec::Vec;

    fn fig1() -> SmileParams {
        SmileParams::new(0.1758, 1.20, 0.00030, 1.0 / 365.0).unwrap()
    }

    fn flat(g: f64, t: f64) -> SmileParams {
        SmileParams::new(g, 1.0, g * g * t, t).unwrap()
    }

    fn gauss_pdf(x: f64, sigma: f64, t: f64) -> f64 {
        let v = sigma * sigma * t;
        (-(x + 0.5 * v) * (x + 0.5 * v) / (2.0 * v)).exp()
            / (2.0 * core::f64::consts::PI * v).sqrt()
    }

    #[test]
    fn factor_is_one_for_flat_smile() {
        let p = flat(0.2, 1.0);
        for &x in &[-0.5, 0.0, 0.3] {
            assert_eq!(perturbation_factor(&p, Moneyness(x)), 1.0);
        }
    }

    #[test]
    fn factor_at_zero_drops_the_x_term() {
        let p = fig1();
        let s = smile_sigma(&p, Moneyness(0.0));
        let s1 = smile_sigma_d1(&p, Moneyness(0.0));
        let s2 = smile_sigma_d2(&p, Moneyness(0.0));
        let want = 1.0 - (s1 * s * p.maturity) * (s1 * s * p.maturity) / 4.0 + s * s2 * p.maturity;
        assert!((perturbation_factor(&p, Moneyness(0.0)) - want).abs() < 1e-15);
    }

    #[test]
    fn factor_matches_finite_difference_assembly() {
        // independent route: assemble F from finite-difference derivatives
        let p = fig1();
        let x = 0.01;
        let h = 1e-6;
        let s = smile_sigma(&p, Moneyness(x));
        let s1 = (smile_sigma(&p, Moneyness(x + h)) - smile_sigma(&p, Moneyness(x - h))) / (2.0 * h);
        let s2 = (smile_sigma(&p, Moneyness(x + h)) - 2.0 * s + smile_sigma(&p, Moneyness(x - h)))
            / (h * h);
        let t = p.maturity;
        let fd = (1.0 - s1 / s * x) * (1.0 - s1 / s * x) - (s1 * s * t) * (s1 * s * t) / 4.0
            + s * s2 * t;
        let an = perturbation_factor(&p, Moneyness(x));
        assert!((an - fd).abs() <= 1e-5 * an.abs(), "{an} vs {fd}");
    }

    #[test]
    fn flat_smile_reduces_to_the_normal_density() {
        let p = flat(0.2, 1.0);
        // peak sits at the mean -sigma^2 T / 2
        let peak = implied_pdf(&p, Moneyness(-0.02));
        assert!((peak - 1.0 / (2.0 * core::f64::consts::PI * 0.04).sqrt()).abs() < 1e-13);
        for i in 0..100 {
            let x = -1.2 + 2.4 * i as f64 / 99.0;
            let diff = implied_pdf(&p, Moneyness(x)) - gauss_pdf(x, 0.2, 1.0);
            assert!(diff.abs() <= 1e-12, "x={x}: diff {diff:e}");
        }
    }

    #[test]
    fn near_normalization_of_the_perturbed_density() {
        let p = fig1();
        let span = 20.0 * p.g * p.maturity.sqrt();
        let q = integrate(|x| implied_pdf(&p, Moneyness(x)), -span, span, 1e-10).unwrap();
        assert!((q.value - 1.0).abs() <= 1e-3, "mass {}", q.value);
    }

    #[test]
    fn ccdf_total_mass_and_gaussian_identity() {
        let p = fig1();
        assert!((implied_ccdf(&p, Moneyness(trunc_lo(&p))).unwrap() - 1.0).abs() <= 1e-8);

        let pf = flat(0.2, 1.0);
        for &x in &[-0.9, -0.3, 0.0, 0.12, 0.8] {
            let want = 0.5 * (1.0 - erf((x + 0.02) / (0.2 * SQRT_2)));
            let got = implied_ccdf(&pf, Moneyness(x)).unwrap();
            assert!((got - want).abs() <= 1e-9, "x={x}");
        }
    }

    #[test]
    fn ccdf_against_fine_trapezoid() {
        // brute-force oracle: one-million-step trapezoid from the truncation
        // point up to the evaluation abscissa
        let p = fig1();
        let x = p.n.sqrt();
        let lo = trunc_lo(&p);
        let n = 1_000_000usize;
        let h = (x - lo) / n as f64;
        let mut acc = 0.5 * (implied_pdf(&p, Moneyness(lo)) + implied_pdf(&p, Moneyness(x)));
        for i in 1..n {
            acc += implied_pdf(&p, Moneyness(lo + i as f64 * h));
        }
        let brute = 1.0 - (1.0 - envelope_ccdf(&p, lo)) - acc * h;
        let got = implied_ccdf(&p, Moneyness(x)).unwrap();
        assert!((got - brute).abs() <= 1e-7, "{got} vs {brute}");
    }

    #[test]
    fn grid_flat_smile_is_clean() {
        let p = flat(0.2, 1.0);
        let span = 6.0 * 0.2;
        let g = density_grid(&p, Moneyness(-0.02 - span), Moneyness(-0.02 + span), 128).unwrap();
        assert_eq!(g.len(), 128);
        assert!(g.norm_defect <= 1e-6, "defect {}", g.norm_defect);
        assert_eq!(g.negative_count(), 0);
        // monotone non-increasing ccdf
        for w in g.ccdf.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn grid_matches_pointwise_ccdf() {
        let p = fig1();
        let span = 10.0 * p.g * p.maturity.sqrt();
        let g = density_grid(&p, Moneyness(p.x_min() - span), Moneyness(p.x_min() + span), 64)
            .unwrap();
        for (i, &x) in g.xs.iter().enumerate().step_by(9) {
            let direct = implied_ccdf(&p, Moneyness(x)).unwrap();
            assert!((g.ccdf[i] - direct).abs() <= 1e-8, "i={i}");
        }
        // Fig-1-like parameters stay positive, so the ccdf must decrease
        assert_eq!(g.negative_count(), 0);
        for w in g.ccdf.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(g.norm_defect <= 1e-3);
    }

    #[test]
    fn grid_flags_negative_density_at_extreme_parameters() {
        // widest/steepest corner of the reference box: the curvature term
        // drives F negative around one half-width from the minimum
        let p = SmileParams::from_rho(0.5, 3.0, 2.5, 3.0).unwrap();
        let span = 4.0 * p.half_width();
        let g = density_grid(&p, Moneyness(p.x_min() - span), Moneyness(p.x_min() + span), 256)
            .unwrap();
        assert!(g.negative_count() > 0);
        for i in 0..g.len() {
            assert_eq!(
                g.negative_mask[i],
                perturbation_factor(&p, Moneyness(g.xs[i])) < 0.0
            );
            assert_eq!(g.negative_mask[i], g.pdf[i] < 0.0);
        }
    }

    #[test]
    fn grid_rejects_bad_requests() {
        let p = flat(0.2, 1.0);
        assert!(density_grid(&p, Moneyness(0.0), Moneyness(1.0), 8).is_err());
        assert!(density_grid(&p, Moneyness(1.0), Moneyness(0.0), 64).is_err());
    }

    #[test]
    fn var_matches_the_gaussian_quantile() {
        let p = flat(0.2, 1.0);
        let r = value_at_risk(&p, 0.01).unwrap();
        // closed form: z_{0.99} sigma sqrt(T) + sigma^2 T / 2
        let want = 2.3263478740408408 * 0.2 + 0.02;
        assert!((r.lambda - want).abs() <= 1e-5, "{} vs {want}", r.lambda);
        assert!((r.level - 0.01).abs() <= 1e-8);

        // the median of the flat-smile density is its mean
        let med = value_at_risk(&p, 0.5).unwrap();
        assert!((med.lambda - 0.02).abs() <= 1e-7);
    }

    #[test]
    fn var_is_monotone_in_level() {
        let p = fig1();
        let l1 = value_at_risk(&p, 0.005).unwrap().lambda;
        let l2 = value_at_risk(&p, 0.01).unwrap().lambda;
        let l3 = value_at_risk(&p, 0.05).unwrap().lambda;
        assert!(l1 > l2 && l2 > l3);
    }

    #[test]
    fn var_rejects_bad_levels_and_negative_tails() {
        let p = fig1();
        assert!(value_at_risk(&p, 0.0).is_err());
        assert!(value_at_risk(&p, 0.6).is_err());

        // over-bent smile: a shallow level drags the threshold into the
        // negative-density band, which must surface as an integrity error
        let bad = SmileParams::from_rho(0.10, 2.5, 3.0, 30.0 / 365.0).unwrap();
        let r = value_at_risk(&bad, 0.45);
        match r {
            Err(Error::NegativeDensity { x_lo, x_hi }) => {
                assert!(x_lo < x_hi && x_hi < 0.0);
            }
            other => panic!("expected NegativeDensity, got {other:?}"),
        }
    }

    #[test]
    fn interior_minima_detection() {
        let p = flat(0.2, 1.0);
        let g = density_grid(&p, Moneyness(-1.0), Moneyness(1.0), 256).unwrap();
        assert!(interior_minima(&g, -1.0, 1.0).is_empty());

        let bent = SmileParams::from_rho(0.10, 2.5, 3.0, 30.0 / 365.0).unwrap();
        let span = 10.0 * bent.g * bent.maturity.sqrt();
        let gb = density_grid(
            &bent,
            Moneyness(bent.x_min() - span),
            Moneyness(bent.x_min() + span),
            512,
        )
        .unwrap();
        let sq = bent.half_width();
        let mins = interior_minima(&gb, bent.x_min(), bent.x_min() + 3.0 * sq);
        assert!(!mins.is_empty());
    }

    #[test]
    fn csv_layout_is_fixed() {
        let p = flat(0.2, 1.0);
        let g = density_grid(&p, Moneyness(-0.5), Moneyness(0.5), 16).unwrap();
        let csv = g.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x,pdf,ccdf,negative_flag");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 4);
        assert_eq!(first[0].parse::<f64>().unwrap(), -0.5);
        assert_eq!(first[3], "0");
        assert_eq!(csv.lines().count(), 17);
    }
}
