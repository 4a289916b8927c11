//! Error type shared by every module in the crate.

use alloc::string::String;

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, Error>;

/// Errors produced by pricing, density, tail and calibration routines.
///
/// Numerical routines never panic on bad input; every contract violation or
/// convergence failure is reported through one of these variants.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {message}")]
    InvalidInput { message: String },

    /// The requested quantity does not exist (e.g. a price outside the
    /// no-arbitrage band has no implied volatility).
    #[error("no solution: {message}")]
    NoSolution { message: String },

    /// An iterative solver hit its iteration cap before reaching tolerance.
    /// The message carries the best iterate or bracket reached.
    #[error("did not converge: {message}")]
    Convergence { message: String },

    /// Adaptive quadrature could not reach the requested tolerance.
    #[error("quadrature failed: {message} (achieved {achieved:e})")]
    Quadrature { message: String, achieved: f64 },

    /// The implied density is negative on an interval that the requested
    /// computation would have to integrate through.
    #[error("implied density negative on x in [{x_lo}, {x_hi}]")]
    NegativeDensity { x_lo: f64, x_hi: f64 },

    /// A least-squares or tail fit could not be carried out on the data.
    #[error("fit error: {message}")]
    FitError { message: String },

    /// Not enough data points for the requested statistic.
    #[error("insufficient data: {message}")]
    InsufficientData { message: String },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput {
            message: message.into(),
        }
    }

    pub(crate) fn fit(message: impl Into<String>) -> Self {
        Error::FitError {
            message: message.into(),
        }
    }
}
