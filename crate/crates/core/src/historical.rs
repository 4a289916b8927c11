//! Historical price series: lagged log returns, per-subgroup volatility and
//! tail-decay estimation, and the decay–volatility scaling fit.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fp::FloatExt;
use crate::tail::{TailEstimate, TransitionRegion};

/// Minimum subgroup size accepted by [`subgroup_stats`].
pub const MIN_GROUP_SIZE: usize = 300;
/// Minimum sample size accepted by [`ccdf_tail_fit`].
pub const MIN_TAIL_SAMPLE: usize = 50;

/// A historical close-price series with strictly ascending timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    label: String,
    /// Ascending day ordinals (calendar encoding is up to the caller).
    days: Vec<i64>,
    closes: Vec<f64>,
}

impl PriceSeries {
    /// # Errors
    /// Rejects series shorter than 2, non-positive closes, mismatched
    /// lengths and non-ascending timestamps (reporting the first offender).
    pub fn new(label: impl Into<String>, days: Vec<i64>, closes: Vec<f64>) -> Result<Self> {
        if days.len() != closes.len() {
            return Err(Error::invalid("timestamps and closes must have equal length"));
        }
        if closes.len() < 2 {
            return Err(Error::InsufficientData {
                message: alloc::format!("price series needs >= 2 rows, got {}", closes.len()),
            });
        }
        for (i, &c) in closes.iter().enumerate() {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::invalid(alloc::format!(
                    "close at row {i} must be > 0, got {c}"
                )));
            }
        }
        if let Some(i) = days.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(alloc::format!(
                "timestamps must be strictly ascending; row {} (day {}) follows day {}",
                i + 1,
                days[i + 1],
                days[i]
            )));
        }
        Ok(Self { label: label.into(), days, closes })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn days(&self) -> &[i64] {
        &self.days
    }
}

/// Lagged log returns `x_i = ln(S_{i+lag} / S_i)` built from a price
/// series; rows are assumed to be one quote per day, so the lag is counted
/// in rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub lag_days: u32,
    pub overlapping: bool,
    pub values: Vec<f64>,
}

/// Build the lag-`lag` return series. Overlapping mode slides one row at a
/// time; non-overlapping strides by the lag (independent samples, the
/// default for subgroup statistics).
pub fn log_returns(series: &PriceSeries, lag: u32, overlapping: bool) -> Result<ReturnSeries> {
    if lag == 0 {
        return Err(Error::invalid("lag must be >= 1"));
    }
    let lag_u = lag as usize;
    let closes = series.closes();
    if closes.len() <= lag_u {
        return Err(Error::InsufficientData {
            message: alloc::format!(
                "series '{}' has {} rows, need more than the lag {lag}",
                series.label(),
                closes.len()
            ),
        });
    }
    let mut values = Vec::new();
    if overlapping {
        for i in 0..closes.len() - lag_u {
            values.push((closes[i + lag_u] / closes[i]).ln());
        }
    } else {
        let mut i = 0;
        while i + lag_u < closes.len() {
            values.push((closes[i + lag_u] / closes[i]).ln());
            i += lag_u;
        }
    }
    Ok(ReturnSeries { lag_days: lag, overlapping, values })
}

/// Which sample tail(s) the empirical decay is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleTail {
    /// Fit gains and losses separately and average the two rates.
    #[default]
    Both,
    Right,
    Left,
}

/// Rank window for the empirical tail fit, expressed through the plotting
/// positions `k/(N+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailWindow {
    pub lo_quantile: f64,
    pub hi_quantile: f64,
    pub side: SampleTail,
}

impl Default for TailWindow {
    fn default() -> Self {
        TailWindow { lo_quantile: 0.85, hi_quantile: 0.99, side: SampleTail::Both }
    }
}

/// Empirical tail decay with the default window (85th–99th percentile,
/// both tails averaged).
pub fn ccdf_tail_fit(returns: &ReturnSeries) -> Result<TailEstimate> {
    ccdf_tail_fit_with(returns, &TailWindow::default())
}

/// Empirical tail decay from the rank-based CCDF.
///
/// The sorted sample gets plotting positions `p_k = k/(N+1)` (which keeps
/// both extreme order statistics off the log singularities). On the right
/// tail, `ln(1 - p_k)` is regressed on `x_(k)` for `p_k` inside the window
/// and `mu` is the negated slope; the left tail mirrors this with
/// `ln(p_k)`. `Both` averages the two rates and pools the residuals.
pub fn ccdf_tail_fit_with(returns: &ReturnSeries, window: &TailWindow) -> Result<TailEstimate> {
    if !(window.lo_quantile > 0.5 && window.hi_quantile < 1.0 && window.lo_quantile < window.hi_quantile) {
        return Err(Error::invalid(
            "tail window quantiles must satisfy 0.5 < lo < hi < 1",
        ));
    }
    let n = returns.values.len();
    if n < MIN_TAIL_SAMPLE {
        return Err(Error::InsufficientData {
            message: alloc::format!("tail fit needs >= {MIN_TAIL_SAMPLE} returns, got {n}"),
        });
    }
    let mut xs = returns.values.clone();
    xs.sort_unstable_by(|a, b| a.partial_cmp(b).expect("returns must not contain NaN"));
    if !(xs[n - 1] > xs[0]) {
        return Err(Error::fit("degenerate sample: no spread between returns"));
    }

    let mut rates = Vec::new();
    let mut residuals = Vec::new();
    let mut window_x = (0.0, 0.0);
    let mut intercept = 0.0;

    if matches!(window.side, SampleTail::Both | SampleTail::Right) {
        let mut px = Vec::new();
        let mut py = Vec::new();
        for (k, &x) in xs.iter().enumerate() {
            let p = (k + 1) as f64 / (n + 1) as f64;
            if p >= window.lo_quantile && p <= window.hi_quantile {
                px.push(x);
                py.push((1.0 - p).ln());
            }
        }
        let (a, b) = fit_line(&px, &py, &mut residuals)?;
        rates.push(-b);
        window_x = (px[0], px[px.len() - 1]);
        intercept = a + b * px[0];
    }
    if matches!(window.side, SampleTail::Both | SampleTail::Left) {
        let mut px = Vec::new();
        let mut py = Vec::new();
        for (k, &x) in xs.iter().enumerate() {
            let p = (k + 1) as f64 / (n + 1) as f64;
            if p >= 1.0 - window.hi_quantile && p <= 1.0 - window.lo_quantile {
                px.push(x);
                py.push(p.ln());
            }
        }
        let (a, b) = fit_line(&px, &py, &mut residuals)?;
        rates.push(b);
        if matches!(window.side, SampleTail::Left) {
            window_x = (px[0], px[px.len() - 1]);
            intercept = a + b * px[0];
        }
    }

    let mu = rates.iter().sum::<f64>() / rates.len() as f64;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(TailEstimate {
        mu,
        intercept,
        rms_residual: rms,
        // the x-range actually fitted, reported in the raw return coordinate
        window: TransitionRegion { u_lo: window_x.0, u_hi: window_x.1, center: 0.0 },
    })
}

fn fit_line(xs: &[f64], ys: &[f64], residuals: &mut Vec<f64>) -> Result<(f64, f64)> {
    if xs.len() < 8 {
        return Err(Error::fit(alloc::format!(
            "only {} points inside the tail window, need at least 8",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::fit("degenerate spread inside the tail window"));
    }
    let slope = sxy / sxx;
    let a = my - slope * mx;
    for (&x, &y) in xs.iter().zip(ys) {
        residuals.push(y - (a + slope * x));
    }
    Ok((a, slope))
}

/// Volatility and tail decay of one subgroup of a lagged return series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoricalStats {
    /// Sample standard deviation (denominator N-1), per-lag return units.
    pub sigma_h: f64,
    /// Empirical tail decay rate, 1/return units.
    pub mu_h: f64,
    pub subgroup_size: usize,
    pub lag_days: u32,
    /// Log-space residual of the tail fit behind `mu_h`.
    pub rms_residual: f64,
}

/// Split the returns into consecutive disjoint subgroups of exactly
/// `group_size` (trailing remainder dropped) and estimate `(sigma_H, mu_H)`
/// for each.
pub fn subgroup_stats(returns: &ReturnSeries, group_size: usize) -> Result<Vec<HistoricalStats>> {
    if group_size < MIN_GROUP_SIZE {
        return Err(Error::invalid(alloc::format!(
            "group_size must be >= {MIN_GROUP_SIZE}, got {group_size}"
        )));
    }
    let n = returns.values.len();
    if n < group_size {
        return Err(Error::InsufficientData {
            message: alloc::format!("{n} returns cannot fill one group of {group_size}"),
        });
    }
    let mut out = Vec::new();
    for chunk in returns.values.chunks_exact(group_size) {
        let mean = chunk.iter().sum::<f64>() / group_size as f64;
        let var = chunk.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (group_size - 1) as f64;
        let sub = ReturnSeries {
            lag_days: returns.lag_days,
            overlapping: returns.overlapping,
            values: chunk.to_vec(),
        };
        let tail = ccdf_tail_fit(&sub)?;
        out.push(HistoricalStats {
            sigma_h: var.sqrt(),
            mu_h: tail.mu,
            subgroup_size: group_size,
            lag_days: returns.lag_days,
            rms_residual: tail.rms_residual,
        });
    }
    Ok(out)
}

/// The fitted constant of the scaling law `sigma_H = C1 / mu_H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub c1: f64,
    /// Standard error of `c1` propagated from the log-space fit.
    pub uncertainty: f64,
}

/// Least squares of `ln(mu_H) = -ln(sigma_H) + ln(C1)` with the unit slope
/// imposed, i.e. `ln C1` is the mean of `ln(mu_H * sigma_H)`.
pub fn fit_scaling(stats: &[HistoricalStats]) -> Result<ScalingFit> {
    if stats.len() < 3 {
        return Err(Error::InsufficientData {
            message: alloc::format!("scaling fit needs >= 3 subgroups, got {}", stats.len()),
        });
    }
    let mut logs = Vec::with_capacity(stats.len());
    for s in stats {
        if !(s.mu_h > 0.0) || !(s.sigma_h > 0.0) {
            return Err(Error::invalid("scaling fit needs positive mu_H and sigma_H"));
        }
        logs.push((s.mu_h * s.sigma_h).ln());
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0);
    let c1 = mean.exp();
    Ok(ScalingFit { c1, uncertainty: c1 * (var / n).sqrt() })
}
