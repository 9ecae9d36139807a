//! Differentiable generalized additive models with a concurvity regularizer.
//!
//! The crate trains additive models `beta + sum_i f_i(x_i)` whose shape
//! functions are small per-feature MLPs or Fourier seasonalities, optionally
//! penalizing the mean absolute pairwise correlation of the fitted
//! contributions. Around the model sit synthetic data generators, metrics,
//! a sweep harness for regularization trade-off curves and an SVG emitter.

pub mod data;
pub mod diffcore;
pub mod error;
pub mod metrics;
pub mod models;
pub mod regularizers;
pub mod svgplot;
pub mod sweep;
pub mod training;

pub use error::{Error, Result};
