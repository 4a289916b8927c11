//! Black-Scholes pricing, delta, the delta/log-moneyness transform and
//! implied-volatility inversion.

use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::special::{erf, erf_inv, norm_cdf, norm_pdf, norm_quantile};

/// Market state shared by all pricing calls: spot, continuously-compounded
/// rate and maturity in year fractions (day-quoted maturities convert as
/// `days / 365`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketContext {
    spot: f64,
    rate: f64,
    maturity: f64,
}

impl MarketContext {
    /// # Errors
    /// Rejects non-positive spot or maturity and non-finite rate.
    pub fn new(spot: f64, rate: f64, maturity: f64) -> Result<Self> {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(Error::invalid(alloc::format!("spot must be > 0, got {spot}")));
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::invalid(alloc::format!(
                "maturity must be > 0 years, got {maturity}"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::invalid("rate must be finite"));
        }
        Ok(Self { spot, rate, maturity })
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Log-moneyness of a strike: `x = ln(K/S0) - rT`.
    pub fn moneyness(&self, strike: f64) -> Result<Moneyness> {
        if !(strike > 0.0) {
            return Err(Error::invalid("moneyness requires strike > 0"));
        }
        Ok(Moneyness((strike / self.spot).ln() - self.rate * self.maturity))
    }

    /// Strike corresponding to a log-moneyness value.
    pub fn strike_for(&self, x: Moneyness) -> f64 {
        self.spot * (x.0 + self.rate * self.maturity).exp()
    }
}

/// Log-return coordinate `x = ln(K/S0) - rT`; the natural abscissa of the
/// smile and of the implied return distribution.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Moneyness(pub f64);

/// Which functional form ties delta to `d1`.
///
/// `PaperErf` uses `delta = erf(d1)` with range (-1, 1); `MarketNormCdf` is
/// the usual call delta `N(d1)` with range (0, 1). Both are supported and
/// invert exactly; `PaperErf` is the crate default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaConvention {
    #[default]
    PaperErf,
    MarketNormCdf,
}

fn check_price_args(strike: f64, sigma: f64) -> Result<()> {
    if !(strike >= 0.0) {
        return Err(Error::invalid(alloc::format!("strike must be >= 0, got {strike}")));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(alloc::format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

fn d1(ctx: &MarketContext, strike: f64, sigma: f64) -> f64 {
    let st = sigma * ctx.maturity.sqrt();
    ((ctx.spot / strike).ln() + (ctx.rate + 0.5 * sigma * sigma) * ctx.maturity) / st
}

/// European call price `S0 N(d1) - K e^{-rT} N(d2)`.
///
/// `strike = 0` degenerates to the forward-value limit `S0`.
pub fn bs_call_price(ctx: &MarketContext, strike: f64, sigma: f64) -> Result<f64> {
    check_price_args(strike, sigma)?;
    if strike == 0.0 {
        return Ok(ctx.spot);
    }
    let d1 = d1(ctx, strike, sigma);
    let d2 = d1 - sigma * ctx.maturity.sqrt();
    Ok(ctx.spot * norm_cdf(d1) - strike * (-ctx.rate * ctx.maturity).exp() * norm_cdf(d2))
}

/// Call delta under the chosen convention.
pub fn bs_delta(
    ctx: &MarketContext,
    strike: f64,
    sigma: f64,
    conv: DeltaConvention,
) -> Result<f64> {
    check_price_args(strike, sigma)?;
    if strike == 0.0 {
        return Ok(match conv {
            DeltaConvention::PaperErf => 1.0,
            DeltaConvention::MarketNormCdf => 1.0,
        });
    }
    let d1 = d1(ctx, strike, sigma);
    Ok(match conv {
        DeltaConvention::PaperErf => erf(d1),
        DeltaConvention::MarketNormCdf => norm_cdf(d1),
    })
}

/// Invert delta to log-moneyness: `x = sigma^2 T / 2 - sigma sqrt(T) q(delta)`
/// where `q` is the inverse of the convention's delta map.
///
/// Monotone decreasing in delta; the round trip through [`bs_delta`] is
/// exact to solver precision.
pub fn delta_to_x(
    delta: f64,
    sigma: f64,
    maturity: f64,
    conv: DeltaConvention,
) -> Result<Moneyness> {
    if !(sigma > 0.0) || !(maturity > 0.0) {
        return Err(Error::invalid("delta_to_x requires sigma > 0 and maturity > 0"));
    }
    let q = match conv {
        DeltaConvention::PaperErf => {
            if !(delta > -1.0 && delta < 1.0) {
                return Err(Error::invalid(alloc::format!(
                    "delta must lie in (-1, 1) for the erf convention, got {delta}"
                )));
            }
            erf_inv(delta)
        }
        DeltaConvention::MarketNormCdf => {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::invalid(alloc::format!(
                    "delta must lie in (0, 1) for the N(d1) convention, got {delta}"
                )));
            }
            norm_quantile(delta)
        }
    };
    Ok(Moneyness(0.5 * sigma * sigma * maturity - sigma * maturity.sqrt() * q))
}

const VOL_BRACKET: (f64, f64) = (1e-6, 10.0);
const VOL_MAX_ITER: usize = 100;

/// Implied volatility of an observed call price.
///
/// The price must lie strictly inside the no-arbitrage band
/// `(max(S0 - K e^{-rT}, 0), S0)`. Safeguarded Newton on the price with a
/// bisection fallback inside the bracket `[1e-6, 10]`; converged when the
/// repriced error is at most `1e-10 * S0`.
pub fn implied_vol(ctx: &MarketContext, strike: f64, observed_price: f64) -> Result<f64> {
    if !(strike > 0.0) {
        return Err(Error::invalid("implied_vol requires strike > 0"));
    }
    let lower = (ctx.spot - strike * (-ctx.rate * ctx.maturity).exp()).max(0.0);
    let upper = ctx.spot;
    if !(observed_price > lower && observed_price < upper) {
        return Err(Error::NoSolution {
            message: alloc::format!(
                "price {observed_price} outside the open no-arbitrage band ({lower}, {upper})"
            ),
        });
    }

    let tol = 1e-10 * ctx.spot;
    let (mut lo, mut hi) = VOL_BRACKET;
    let diff_at = |sigma: f64| bs_call_price(ctx, strike, sigma).map(|p| p - observed_price);

    if diff_at(lo)? > 0.0 {
        // already above the target at the smallest vol: intrinsic ~ price
        return Err(Error::NoSolution {
            message: alloc::format!("price {observed_price} below the value at sigma = {lo}"),
        });
    }
    if diff_at(hi)? < 0.0 {
        return Err(Error::NoSolution {
            message: alloc::format!("price {observed_price} above the value at sigma = {hi}"),
        });
    }

    // moment-matching starting guess, clamped into the bracket
    let mut sigma = ((2.0 * core::f64::consts::PI / ctx.maturity).sqrt() * observed_price
        / ctx.spot)
        .clamp(1e-3, 2.0);

    for _ in 0..VOL_MAX_ITER {
        let diff = diff_at(sigma)?;
        if diff.abs() <= tol {
            return Ok(sigma);
        }
        if diff > 0.0 {
            hi = sigma;
        } else {
            lo = sigma;
        }
        let vega = ctx.spot * norm_pdf(d1(ctx, strike, sigma)) * ctx.maturity.sqrt();
        let mut next = sigma - diff / vega;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        sigma = next;
    }
    Err(Error::Convergence {
        message: alloc::format!(
            "implied_vol: {VOL_MAX_ITER} iterations, best bracket [{lo}, {hi}]"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec::Vec;

    fn ctx(s0: f64, r: f64, t: f64) -> MarketContext {
        MarketContext::new(s0, r, t).unwrap()
    }

    #[test]
    fn zero_strike_pays_spot() {
        let c = ctx(100.0, 0.05, 1.0);
        assert_eq!(bs_call_price(&c, 0.0, 0.2).unwrap(), 100.0);
    }

    #[test]
    fn vanishing_vol_gives_intrinsic_value() {
        let c = ctx(100.0, 0.0, 1.0);
        let p = bs_call_price(&c, 80.0, 1e-9).unwrap();
        assert!((p - 20.0).abs() <= 1e-6);
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = ctx(100.0, 0.0, 1.0);
        assert!(bs_call_price(&c, -1.0, 0.2).is_err());
        assert!(bs_call_price(&c, 100.0, 0.0).is_err());
        assert!(bs_call_price(&c, 100.0, -0.3).is_err());
        assert!(MarketContext::new(0.0, 0.0, 1.0).is_err());
        assert!(MarketContext::new(100.0, 0.0, 0.0).is_err());
        assert!(MarketContext::new(100.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn price_against_lognormal_quadrature() {
        // independent route: composite-Simpson integration of the discounted
        // payoff against the lognormal terminal density
        fn oracle(c: &MarketContext, k: f64, sigma: f64) -> f64 {
            let (s0, r, t) = (c.spot(), c.rate(), c.maturity());
            let m = (r - 0.5 * sigma * sigma) * t;
            let sd = sigma * t.sqrt();
            let y_lo = (k / s0).ln();
            let y_hi = (m + sd * sd) + 40.0 * sd; // beyond the shifted mode
            let n = 200_001usize;
            let h = (y_hi - y_lo) / (n - 1) as f64;
            let integrand = |y: f64| {
                let payoff = s0 * y.exp() - k;
                let z = (y - m) / sd;
                payoff * (-0.5 * z * z).exp() / (sd * (2.0 * core::f64::consts::PI).sqrt())
            };
            let mut acc = integrand(y_lo) + integrand(y_hi);
            for i in 1..n - 1 {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * integrand(y_lo + i as f64 * h);
            }
            (-r * t).exp() * acc * h / 3.0
        }
        let c = ctx(100.0, 0.0, 1.0);
        let got = bs_call_price(&c, 100.0, 0.2).unwrap();
        let want = oracle(&c, 100.0, 0.2);
        assert!((got - want).abs() <= 1e-7 * want, "got {got}, oracle {want}");
    }

    #[test]
    fn delta_at_d1_zero() {
        // choose K so ln(S0/K) = -(r + sigma^2/2) T, i.e. d1 = 0
        let (s0, r, t, sigma) = (100.0, 0.03, 0.5, 0.25);
        let k = s0 * ((r + 0.5 * sigma * sigma) * t).exp();
        let c = ctx(s0, r, t);
        let d_paper = bs_delta(&c, k, sigma, DeltaConvention::PaperErf).unwrap();
        let d_mkt = bs_delta(&c, k, sigma, DeltaConvention::MarketNormCdf).unwrap();
        assert!(d_paper.abs() < 1e-14);
        assert!((d_mkt - 0.5).abs() < 1e-14);
    }

    #[test]
    fn market_delta_matches_price_sensitivity() {
        // dC/dS0 by central difference is N(d1); the erf-convention delta is
        // the deterministic transform erf(d1) = 2 N(d1 sqrt(2)) - 1 of it
        let (k, r, t, sigma) = (90.0, 0.0, 0.25, 0.2);
        let h = 1e-4;
        let up = bs_call_price(&ctx(100.0 + h, r, t), k, sigma).unwrap();
        let dn = bs_call_price(&ctx(100.0 - h, r, t), k, sigma).unwrap();
        let fd = (up - dn) / (2.0 * h);
        let c = ctx(100.0, r, t);
        let d_mkt = bs_delta(&c, k, sigma, DeltaConvention::MarketNormCdf).unwrap();
        assert!((fd - d_mkt).abs() < 1e-7, "fd {fd} vs N(d1) {d_mkt}");
        let d_paper = bs_delta(&c, k, sigma, DeltaConvention::PaperErf).unwrap();
        let z = crate::special::norm_quantile(d_mkt);
        assert!((d_paper - crate::special::erf(z)).abs() < 1e-12);
    }

    #[test]
    fn delta_to_x_at_zero_delta() {
        let x = delta_to_x(0.0, 0.2, 1.0, DeltaConvention::PaperErf).unwrap();
        assert!((x.0 - 0.02).abs() < 1e-16);
    }

    #[test]
    fn delta_to_x_round_trips_through_bs_delta() {
        for &(sigma, t) in &[(0.1758, 1.0 / 365.0), (0.2, 1.0), (0.45, 0.08)] {
            for &delta in &[-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9] {
                let x = delta_to_x(delta, sigma, t, DeltaConvention::PaperErf).unwrap();
                let c = ctx(1.0, 0.0, t);
                let k = c.strike_for(x);
                let back = bs_delta(&c, k, sigma, DeltaConvention::PaperErf).unwrap();
                assert!((back - delta).abs() <= 1e-10, "delta {delta} -> {back}");
            }
            for &delta in &[0.05, 0.5, 0.95] {
                let x = delta_to_x(delta, sigma, t, DeltaConvention::MarketNormCdf).unwrap();
                let c = ctx(1.0, 0.0, t);
                let k = c.strike_for(x);
                let back = bs_delta(&c, k, sigma, DeltaConvention::MarketNormCdf).unwrap();
                assert!((back - delta).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn delta_to_x_monotone_and_divergent() {
        let mut last = f64::INFINITY;
        for &d in &[-0.999, -0.5, 0.0, 0.5, 0.9, 0.999, 0.9999999] {
            let x = delta_to_x(d, 0.2, 1.0, DeltaConvention::PaperErf).unwrap().0;
            assert!(x < last, "x must decrease with delta");
            last = x;
        }
        // deep-in-the-money limit walks off to -infinity
        assert!(delta_to_x(1.0 - 1e-13, 0.2, 1.0, DeltaConvention::PaperErf).unwrap().0 < -1.0);
        assert!(delta_to_x(1.0, 0.2, 1.0, DeltaConvention::PaperErf).is_err());
        assert!(delta_to_x(-1.0, 0.2, 1.0, DeltaConvention::PaperErf).is_err());
        assert!(delta_to_x(0.0, 0.2, 1.0, DeltaConvention::MarketNormCdf).is_err());
    }

    #[test]
    fn implied_vol_round_trips() {
        let c = ctx(100.0, 0.02, 0.75);
        let p = bs_call_price(&c, 105.0, 0.2).unwrap();
        assert!((implied_vol(&c, 105.0, p).unwrap() - 0.2).abs() <= 1e-8);

        // intraday maturity at the level quoted for one-day FX smiles
        let c1 = ctx(1.0, 0.0, 1.0 / 365.0);
        let p1 = bs_call_price(&c1, 1.0, 0.1758).unwrap();
        assert!((implied_vol(&c1, 1.0, p1).unwrap() - 0.1758).abs() <= 1e-8);
    }

    #[test]
    fn implied_vol_rejects_out_of_band_prices() {
        let c = ctx(100.0, 0.0, 1.0);
        assert!(matches!(
            implied_vol(&c, 100.0, 100.0),
            Err(Error::NoSolution { .. })
        ));
        assert!(matches!(
            implied_vol(&c, 80.0, 20.0),
            Err(Error::NoSolution { .. })
        ));
        assert!(matches!(
            implied_vol(&c, 100.0, 150.0),
            Err(Error::NoSolution { .. })
        ));
    }

    #[test]
    fn price_bounds_and_vega_monotonicity() {
        let sigmas: Vec<f64> = (1..=30).map(|i| 0.01 + 0.11 * i as f64).collect();
        for &(s0, k, r, t) in &[
            (100.0, 80.0, 0.0, 0.5),
            (100.0, 100.0, 0.03, 1.0),
            (1.0, 1.05, -0.01, 0.1),
            (50.0, 120.0, 0.05, 2.0),
        ] {
            let c = ctx(s0, r, t);
            let lower = (s0 - k * (-r * t as f64).exp()).max(0.0);
            let mut prev = f64::NEG_INFINITY;
            for &sigma in &sigmas {
                let p = bs_call_price(&c, k, sigma).unwrap();
                assert!(p > prev, "price must increase with sigma");
                assert!(p >= lower && p <= s0, "bounds violated: {p}");
                prev = p;
            }
        }
    }
}
