//! Local conformal prediction intervals for gradient-boosted trees.
//!
//! A boosted ensemble already partitions feature space: every point visits
//! one leaf per tree, and points sharing a prefix of that leaf path fall in
//! the same cell. This crate builds an adaptive-depth partition from the
//! calibration points' leaf paths, merges sparse cells by weighted Hamming
//! distance, and calibrates a split-conformal quantile inside each cell.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases below name the concrete instantiations.

pub mod cli;
pub mod conformal;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gbm;
pub mod metrics;
pub mod partition;
pub mod rng;
mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DatasetF64 = data::Dataset<f64>;
pub type DatasetF32 = data::Dataset<f32>;
pub type EnsembleF64 = gbm::BoostedEnsemble<f64>;
pub type EnsembleF32 = gbm::BoostedEnsemble<f32>;
pub type LocalCalibratorF64 = conformal::LocalCalibrator<f64>;
pub type LocalCalibratorF32 = conformal::LocalCalibrator<f32>;
pub type IntervalF64 = conformal::PredictionInterval<f64>;
pub type IntervalF32 = conformal::PredictionInterval<f32>;
