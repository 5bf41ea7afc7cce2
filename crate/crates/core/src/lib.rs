//! Uncertainty-calibrated MLPs for covariate-shifted tabular data.
//!
//! The centrepiece is transductive dropout: a Monte Carlo dropout network
//! whose per-input dropout rates are trained so that predictive variance
//! discriminates source from (unlabelled, shifted) target points. The crate
//! also ships the baseline methods, the evaluation metrics and a seeded
//! experiment harness, all driven by the `transdrop` CLI.

pub mod array;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod network;
pub mod objective;
pub mod rng;
pub mod training;

pub use array::Array;
pub use error::{Error, Result};
