//! Volatility-smile calibration and tail-risk analytics.
//!
//! The crate fits a bounded three-parameter volatility smile to market
//! quotes, derives the return distribution implied by the smile-adjusted
//! Black-Scholes prices, characterises the exponential decay of its tails,
//! and estimates value-at-risk. A second, "conditional" calibration mode
//! eliminates one smile parameter by pinning the implied tail decay to the
//! decay measured from historical return series.
//!
//! Modules map one-to-one onto the pipeline stages:
//!
//! - [`pricing`] — Black-Scholes prices, delta, the delta/log-moneyness
//!   transform and implied-volatility inversion
//! - [`smile`] — the bounded smile function, its derivatives and shape
//!   diagnostics
//! - [`density`] — smile-implied return density, CCDF, density grids and VaR
//! - [`tail`] — transition-region tail fitting, the analytic decay model and
//!   its parameter-grid validation
//! - [`historical`] — log returns, per-subgroup decay/volatility estimation
//!   and the decay–volatility scaling fit
//! - [`calibrate`] — unconditional and conditional least-squares smile fits
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats and the
//! command-line front end live in the companion `voltail-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod calibrate;
pub mod density;
pub mod error;
mod fp;
pub mod historical;
pub mod lm;
pub mod pricing;
pub mod quad;
pub mod smile;
pub mod special;
pub mod tail;

pub use error::{Error, Result};
pub use pricing::{DeltaConvention, MarketContext, Moneyness};
pub use smile::{SmileParams, SmileShapeReport};
