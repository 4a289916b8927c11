//! Error function family and normal-distribution helpers.
//!
//! `erf`/`erfc` are delegated to `libm` (sub-ulp accuracy over the whole
//! range, well inside the 1e-12 absolute accuracy this crate needs).
//! [`ln_erfc`] and [`erf_inv`] are implemented here: the former switches to
//! an asymptotic expansion where `erfc` underflows, the latter refines an
//! initial approximation with safeguarded Newton iterations on `erf`/`erfc`.

use crate::fp::FloatExt;

pub(crate) const SQRT_PI: f64 = 1.772453850905516;
pub(crate) const SQRT_2: f64 = core::f64::consts::SQRT_2;
/// 2/sqrt(pi), the derivative of erf at 0.
const TWO_OVER_SQRT_PI: f64 = 1.1283791670955126;

/// The error function.
#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// The complementary error function, `1 - erf(x)`.
#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// `ln(erfc(x))`, valid far beyond the point where `erfc` underflows.
///
/// For `x >= 26` uses the asymptotic series of the scaled complementary
/// error function; truncation error there is below 1e-12 relative.
pub fn ln_erfc(x: f64) -> f64 {
    if x < 26.0 {
        return erfc(x).ln();
    }
    let x2 = x * x;
    let inv = 1.0 / x2;
    // erfc(x) = exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...)
    let series = 1.0 + inv * (-0.5 + inv * (0.75 + inv * (-1.875 + inv * 6.5625)));
    -x2 - (x * SQRT_PI).ln() + series.ln()
}

/// Inverse error function on (-1, 1); returns +-infinity at +-1 and NaN
/// outside the closed interval.
///
/// A crude series/asymptotic starting point is polished with bracketed
/// Newton iterations, solving `erf(x) = y` below `|y| = 0.5` and
/// `erfc(x) = 1 - |y|` above it, so accuracy is limited only by the
/// underlying `erf`/`erfc` (absolute error well under 1e-12 over the range
/// used by delta quotes).
pub fn erf_inv(y: f64) -> f64 {
    if y.is_nan() || y < -1.0 || y > 1.0 {
        return f64::NAN;
    }
    if y == 1.0 {
        return f64::INFINITY;
    }
    if y == -1.0 {
        return f64::NEG_INFINITY;
    }
    if y == 0.0 {
        return y; // preserves signed zero
    }

    let a = y.abs();
    let q = 1.0 - a;
    let mut x = if a < 0.5 {
        // leading terms of the Maclaurin series of inverse erf
        0.5 * SQRT_PI * a * (1.0 + core::f64::consts::PI / 12.0 * a * a)
    } else {
        // from erfc(x) ~ exp(-x^2)/(x sqrt(pi))
        let l = -q.ln();
        (l - 0.5 * (core::f64::consts::PI * l).ln()).max(0.25).sqrt()
    };

    // bracket the root, then Newton with bisection fallback
    let mut lo = 0.0f64;
    let mut hi = x.max(1.0);
    while erfc(hi) > q {
        lo = hi;
        hi *= 2.0;
    }
    x = x.clamp(lo, hi);
    for _ in 0..100 {
        // q - erfc(x) equals erf(x) - a but stays well conditioned as a -> 1
        let fx = if a < 0.5 { erf(x) - a } else { q - erfc(x) };
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let dfx = TWO_OVER_SQRT_PI * (-x * x).exp();
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= 1e-16 * x.abs() {
            break;
        }
    }
    if y < 0.0 {
        -x
    } else {
        x
    }
}

/// Standard normal CDF, computed through `erfc` so both tails keep full
/// relative accuracy.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (SQRT_2 * SQRT_PI)
}

/// Inverse standard normal CDF.
#[inline]
pub fn norm_quantile(p: f64) -> f64 {
    SQRT_2 * erf_inv(2.0 * p - 1.0)
}
