//! Bayesian spatio-temporal Gaussian models on stream (dendritic) networks.
//!
//! The crate covers the full pipeline: network geometry (hydrologic
//! distances, flow connectivity, additive function values and tail-up
//! weights), spatial covariance mixtures, four vector-autoregressive
//! temporal structures, adaptive MCMC with exact Gaussian imputation of
//! missing responses, separable simple kriging with exceedance
//! post-processing, and forecast-verification metrics. A CLI
//! (`simulate` / `fit` / `predict` / `evaluate` / `diagnose`) wires the
//! stages together over plain JSON/CSV files.

pub mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod network;
pub mod predictor;
pub mod sampler;
pub mod temporal;
pub mod workbench;

pub use error::{Error, Result};
