//! Pricing engine for Bermudan swaptions under a one-factor Gaussian
//! short-rate model, plus the feature/target dataset used to train fast
//! pricing surrogates.

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dataset;
pub mod error;
pub mod g1pp;
pub mod lsmc;
pub mod market_data;

pub use error::{Error, Result};
