//! Data simulation, file formats, configuration, and the CLI pipeline
//! (simulate → fit → predict → evaluate → diagnose).

pub mod cli;
pub mod config;
pub mod formats;
pub mod pipeline;
pub mod simulate;
pub mod tables;

pub use config::RunConfig;
pub use formats::{Manifest, ObservationTable, PredictionTable, TruthRow};
pub use simulate::{grid_euclidean, random_tree, simulate, Simulated};
