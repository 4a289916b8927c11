//! The bounded three-parameter volatility smile, its analytic derivatives
//! and shape diagnostics.
//!
//! With `u = x + g^2 T / 2` the smile is
//!
//! ```text
//! sigma(x) = g * [1 + (chi - 1) * u^2 / (u^2 + n)]
//! ```
//!
//! an even function of `u` that rises from its minimum `g` at
//! `x = -g^2 T / 2` towards the saturation level `g * chi`; `sqrt(n)` is the
//! half width at half height. Fitting code works in the scale-free width
//! `rho = n / (g^2 T)` because `sqrt(n)` tracks `g sqrt(T)` across
//! maturities.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::pricing::Moneyness;

/// Smile parameters `(g, chi, n)` plus the maturity they were fitted at.
///
/// Invariants: `g > 0`, `chi >= 1`, `n > 0`, `maturity > 0`; then
/// `g <= sigma(x) <= g * chi` holds for every `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileParams {
    /// Minimum implied volatility (annualized).
    pub g: f64,
    /// Saturation ratio: the large-|x| limit of `sigma / g`.
    pub chi: f64,
    /// Squared half-width at half height, in log-return^2 units.
    pub n: f64,
    /// Maturity in year fractions.
    pub maturity: f64,
}

impl SmileParams {
    /// # Errors
    /// Rejects parameter sets that violate the type invariants.
    pub fn new(g: f64, chi: f64, n: f64, maturity: f64) -> Result<Self> {
        let p = Self { g, chi, n, maturity };
        match validate_params(&p, false).into_iter().next() {
            None => Ok(p),
            Some(v) => Err(Error::invalid(v.message)),
        }
    }

    /// Construct from the scale-free width `rho = n / (g^2 T)`.
    pub fn from_rho(g: f64, chi: f64, rho: f64, maturity: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::invalid(alloc::format!("rho must be > 0, got {rho}")));
        }
        Self::new(g, chi, rho * g * g * maturity, maturity)
    }

    /// Scale-free squared width `rho = n / (g^2 T)`.
    pub fn rho(&self) -> f64 {
        self.n / (self.g * self.g * self.maturity)
    }

    /// Abscissa of the smile minimum, `-g^2 T / 2`.
    pub fn x_min(&self) -> f64 {
        -0.5 * self.g * self.g * self.maturity
    }

    /// Half width at half height, `sqrt(n)`.
    pub fn half_width(&self) -> f64 {
        self.n.sqrt()
    }
}

/// Derived shape quantities reported alongside a fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmileShapeReport {
    /// Location of the smile minimum.
    pub x_min: f64,
    /// Rise from minimum to saturation, `g (chi - 1)`.
    pub height: f64,
    /// Half width at half height, `sqrt(n)`.
    pub half_width: f64,
    /// Scale-free squared width `n / (g^2 T)`.
    pub rho: f64,
    /// Width in units of `g sqrt(T)`: `sqrt(n) / (g sqrt(T))`; equal to
    /// `sqrt(rho)`.
    pub c_implied: f64,
}

/// One violated constraint from [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamViolation {
    pub field: &'static str,
    pub message: String,
}

impl core::fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Normalized distance from the minimum; switches form for huge `|u|` so the
/// ratio neither overflows nor loses the saturation limit.
#[inline]
fn weight(u: f64, n: f64) -> f64 {
    if u.abs() > 1e6 * n.sqrt() {
        1.0 / (1.0 + n / (u * u))
    } else {
        u * u / (u * u + n)
    }
}

/// Smile value `sigma(x)`; bounded in `[g, g chi]` for valid parameters.
pub fn smile_sigma(p: &SmileParams, x: Moneyness) -> f64 {
    let u = x.0 - p.x_min();
    p.g * (1.0 + (p.chi - 1.0) * weight(u, p.n))
}

/// First derivative `d sigma / d x = 2 g (chi-1) n u / (u^2 + n)^2`.
pub fn smile_sigma_d1(p: &SmileParams, x: Moneyness) -> f64 {
    let u = x.0 - p.x_min();
    let d = u * u + p.n;
    if !d.is_finite() {
        return 0.0;
    }
    2.0 * p.g * (p.chi - 1.0) * p.n * u / (d * d)
}

/// Second derivative `d^2 sigma / d x^2 = 2 g (chi-1) n (n - 3u^2) / (u^2 + n)^3`.
pub fn smile_sigma_d2(p: &SmileParams, x: Moneyness) -> f64 {
    let u = x.0 - p.x_min();
    let d = u * u + p.n;
    if !d.is_finite() {
        return 0.0;
    }
    2.0 * p.g * (p.chi - 1.0) * p.n * (p.n - 3.0 * u * u) / (d * d * d)
}

/// Shape diagnostics for a parameter set.
pub fn shape_report(p: &SmileParams) -> SmileShapeReport {
    let half_width = p.n.sqrt();
    SmileShapeReport {
        x_min: p.x_min(),
        height: p.g * (p.chi - 1.0),
        half_width,
        rho: p.rho(),
        c_implied: half_width / (p.g * p.maturity.sqrt()),
    }
}

/// Check type invariants and, optionally, the reference parameter box used
/// for the decay-model validation sweeps (`g` in [0.03, 0.5], `rho` in
/// [2.5, 10], `T` in [1/365, 1080/365] years, `chi` in [1.01, 3]).
///
/// Returns the full list of violations instead of failing on the first.
pub fn validate_params(p: &SmileParams, table_bounds: bool) -> Vec<ParamViolation> {
    let mut out = Vec::new();
    if !(p.g > 0.0) || !p.g.is_finite() {
        out.push(ParamViolation { field: "g", message: alloc::format!("must be > 0, got {}", p.g) });
    }
    if !(p.chi >= 1.0) || !p.chi.is_finite() {
        out.push(ParamViolation {
            field: "chi",
            message: alloc::format!("must be >= 1, got {}", p.chi),
        });
    }
    if !(p.n > 0.0) || !p.n.is_finite() {
        out.push(ParamViolation { field: "n", message: alloc::format!("must be > 0, got {}", p.n) });
    }
    if !(p.maturity > 0.0) || !p.maturity.is_finite() {
        out.push(ParamViolation {
            field: "maturity",
            message: alloc::format!("must be > 0, got {}", p.maturity),
        });
    }
    if table_bounds && out.is_empty() {
        let rho = p.rho();
        let t_days = p.maturity * 365.0;
        if !(0.03..=0.5).contains(&p.g) {
            out.push(ParamViolation {
                field: "g",
                message: alloc::format!("{} outside the reference range [0.03, 0.5]", p.g),
            });
        }
        if !(2.5..=10.0).contains(&rho) {
            out.push(ParamViolation {
                field: "rho",
                message: alloc::format!("{rho} outside the reference range [2.5, 10]"),
            });
        }
        if !(1.0 - 1e-9..=1080.0 + 1e-9).contains(&t_days) {
            out.push(ParamViolation {
                field: "maturity",
                message: alloc::format!("{t_days} days outside the reference range [1, 1080]"),
            });
        }
        if !(1.01..=3.0).contains(&p.chi) {
            out.push(ParamViolation {
                field: "chi",
                message: alloc::format!("{} outside the reference range [1.01, 3]", p.chi),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIG1: SmileParams = SmileParams {
        g: 0.1758,
        chi: 1.20,
        n: 0.00030,
        maturity: 1.0 / 365.0,
    };

    #[test]
    fn minimum_value_is_g() {
        let s = smile_sigma(&FIG1, Moneyness(FIG1.x_min()));
        assert_eq!(s, FIG1.g);
    }

    #[test]
    fn flat_when_chi_is_one() {
        let p = SmileParams::new(0.2, 1.0, 1e-4, 1.0).unwrap();
        for &x in &[-5.0, -0.01, 0.0, 0.3, 2.0] {
            assert_eq!(smile_sigma(&p, Moneyness(x)), 0.2);
            assert_eq!(smile_sigma_d1(&p, Moneyness(x)), 0.0);
            assert_eq!(smile_sigma_d2(&p, Moneyness(x)), 0.0);
        }
    }

    #[test]
    fn half_width_hits_half_height() {
        let x = Moneyness(FIG1.x_min() + FIG1.half_width());
        let want = FIG1.g * (1.0 + 0.5 * (FIG1.chi - 1.0));
        assert!((smile_sigma(&FIG1, x) - want).abs() < 1e-15);
        let x_left = Moneyness(FIG1.x_min() - FIG1.half_width());
        assert!((smile_sigma(&FIG1, x_left) - want).abs() < 1e-15);
    }

    #[test]
    fn derivatives_vanish_at_the_minimum() {
        assert_eq!(smile_sigma_d1(&FIG1, Moneyness(FIG1.x_min())), 0.0);
        let curv = smile_sigma_d2(&FIG1, Moneyness(FIG1.x_min()));
        let want = 2.0 * FIG1.g * (FIG1.chi - 1.0) / FIG1.n;
        assert!(curv > 0.0);
        assert!((curv - want).abs() < 1e-9 * want);
    }

    #[test]
    fn first_derivative_matches_finite_difference() {
        let h = 1e-7;
        for &x in &[0.01, -0.004, 0.0317] {
            let fd = (smile_sigma(&FIG1, Moneyness(x + h)) - smile_sigma(&FIG1, Moneyness(x - h)))
                / (2.0 * h);
            let an = smile_sigma_d1(&FIG1, Moneyness(x));
            assert!((an - fd).abs() <= 1e-6 * an.abs().max(1e-12), "x={x}: {an} vs {fd}");
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let h = 2e-6;
        for &x in &[0.02, -0.007, 0.001] {
            let fd = (smile_sigma(&FIG1, Moneyness(x + h)) - 2.0 * smile_sigma(&FIG1, Moneyness(x))
                + smile_sigma(&FIG1, Moneyness(x - h)))
                / (h * h);
            let an = smile_sigma_d2(&FIG1, Moneyness(x));
            assert!((an - fd).abs() <= 1e-5 * an.abs().max(1.0), "x={x}: {an} vs {fd}");
        }
    }

    #[test]
    fn shape_report_fig1_width_ratio() {
        let r = shape_report(&FIG1);
        // sqrt(0.00030) / (0.1758 sqrt(1/365)), sixty-digit value 1.88229716...
        assert!((r.c_implied - 1.8822971681199428).abs() < 1e-12);
        assert!((r.rho - r.c_implied * r.c_implied).abs() < 1e-12);
        assert!((r.x_min - FIG1.x_min()).abs() == 0.0);
    }

    #[test]
    fn shape_report_recovers_constructed_width_ratio() {
        let g = 0.31;
        let t = 0.4;
        let n = (2.65 * g * t.sqrt()).powi(2);
        let p = SmileParams::new(g, 1.4, n, t).unwrap();
        assert!((shape_report(&p).c_implied - 2.65).abs() < 1e-12);
        let flat = SmileParams::new(g, 1.0, n, t).unwrap();
        assert_eq!(shape_report(&flat).height, 0.0);
    }

    #[test]
    fn saturation_limit() {
        // |u| = 1e3 sqrt(n) must sit within 1e-3 of the full rise
        let u = 1e3 * FIG1.half_width();
        let s = smile_sigma(&FIG1, Moneyness(FIG1.x_min() + u));
        let top = FIG1.g * FIG1.chi;
        assert!((top - s).abs() <= 1e-3 * FIG1.g * (FIG1.chi - 1.0));
        // and the guarded branch survives astronomically large arguments
        let far = smile_sigma(&FIG1, Moneyness(1e300));
        assert!((far - top).abs() <= 1e-12);
        assert_eq!(smile_sigma_d1(&FIG1, Moneyness(1e300)), 0.0);
        assert_eq!(smile_sigma_d2(&FIG1, Moneyness(1e300)), 0.0);
    }

    #[test]
    fn validate_rejects_each_invariant() {
        let bad = SmileParams { g: 0.2, chi: 0.9, n: 1e-4, maturity: 1.0 };
        let v = validate_params(&bad, false);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "chi");
        assert!(SmileParams::new(0.2, 0.9, 1e-4, 1.0).is_err());
        assert!(SmileParams::new(-0.1, 1.2, 1e-4, 1.0).is_err());
        assert!(SmileParams::new(0.2, 1.2, 0.0, 1.0).is_err());
        assert!(SmileParams::new(0.2, 1.2, 1e-4, -1.0).is_err());
    }

    #[test]
    fn validate_table_bounds() {
        let ok = SmileParams::from_rho(0.03, 1.01, 2.5, 1.0 / 365.0).unwrap();
        assert!(validate_params(&ok, true).is_empty());

        let mut big_g = ok;
        big_g.g = 0.6;
        big_g.n = 2.5 * 0.6 * 0.6 / 365.0;
        let v = validate_params(&big_g, true);
        assert!(v.iter().any(|v| v.field == "g" && v.message.contains("0.5")));

        let wide = SmileParams::from_rho(0.1, 1.5, 12.0, 0.5).unwrap();
        assert!(validate_params(&wide, true).iter().any(|v| v.field == "rho"));
    }

    proptest! {
        #[test]
        fn bounded_and_symmetric(
            g in 0.01f64..1.0,
            chi in 1.0f64..4.0,
            rho in 0.5f64..20.0,
            t in 0.002f64..3.0,
            u in -0.9f64..0.9,
        ) {
            let p = SmileParams::from_rho(g, chi, rho, t).unwrap();
            let s_plus = smile_sigma(&p, Moneyness(p.x_min() + u));
            let s_minus = smile_sigma(&p, Moneyness(p.x_min() - u));
            prop_assert!(s_plus >= p.g * (1.0 - 1e-15));
            prop_assert!(s_plus <= p.g * p.chi * (1.0 + 1e-15));
            // evenness in u is exact: both sides square the same offset
            prop_assert_eq!(s_plus, s_minus);
        }
    }
}
