//! Surrogate regressors, model selection, error metrics and feature
//! importance.

// NaN must fail range checks, so `!(x > 0.0)` is intended.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cv;
pub mod error;
pub mod forest;
pub mod gbrt;
pub mod importance;
pub mod knn;
pub(crate) mod linalg;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod preprocess;
pub mod ridge;
pub mod tree;

pub use error::{MlError, Result};
pub use model::{ModelKind, ModelSpec, Pipeline};
