//! Crate-wide error type.
//!
//! Variants are grouped by origin: input validation, numerical failures,
//! and configuration problems. `exit_code` maps them onto the CLI contract
//! (1 = validation, 2 = numerical).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // ---- network topology ----
    #[error("cycle detected in segment parent links at segment {0}")]
    CycleDetected(i64),
    #[error("multiple outlet segments: {0} and {1} both lack a parent")]
    MultipleOutlets(i64, i64),
    #[error("dangling reference: {kind} {id} references missing segment {target}")]
    DanglingReference {
        kind: &'static str,
        id: i64,
        target: i64,
    },
    #[error("site {site_id}: updist {updist} outside segment {segment_id} extent [{lo}, {hi}]")]
    UpdistOutOfRange {
        site_id: i64,
        segment_id: i64,
        updist: f64,
        lo: f64,
        hi: f64,
    },
    #[error("segment {0}: watershed area {1} smaller than the sum of its children's ({2})")]
    WatershedNotMonotone(i64, f64, f64),
    #[error("segment {0} has non-positive weight {1}")]
    NonPositiveWeight(i64, f64),
    #[error("additive function values not computed; call compute_afv first")]
    AfvMissing,
    #[error("operation requires a stream network but the bundle was built from bare coordinates")]
    NetworkRequired,

    // ---- kernels / linear algebra ----
    #[error("unknown covariance form '{0}' for family '{1}'")]
    InvalidForm(String, String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix not positive definite (jitter escalated to {0:.3e})")]
    NotPositiveDefinite(f64),
    #[error("dense space-time matrix of size {0} exceeds cap {1}")]
    DenseCapExceeded(usize, usize),

    // ---- temporal ----
    #[error("transition matrix unstable: spectral radius {0} >= 1")]
    UnstablePhi(f64),
    #[error("power iteration failed to converge after {0} iterations")]
    NoConvergence(usize),
    #[error("autoregressive parameter {0} outside (-1, 1)")]
    NonStationaryPhi(f64),
    #[error("operation unsupported for this temporal case: {0}")]
    UnsupportedCase(&'static str),
    #[error("site-specific autoregression (case 2a) has no value at new sites; prediction unsupported")]
    Case2aUnsupported,

    // ---- model / design ----
    #[error("unknown covariate column '{0}'")]
    UnknownColumn(String),
    #[error("prediction site {0} is missing covariate values at t={1}")]
    CovariateMissing(i64, usize),

    // ---- sampler / metrics ----
    #[error("invalid MCMC configuration: {0}")]
    ConfigInvalid(String),
    #[error("diagnostics need at least {needed} draws/chains, got {got}")]
    InsufficientDraws { needed: usize, got: usize },
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("CRPS needs at least 2 draws per cell, got {0}")]
    TooFewDraws(usize),
    #[error("HDI needs a sample of at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    // ---- I/O ----
    #[error("parse error in {file} at line {line}: {msg}")]
    ParseError {
        file: String,
        line: usize,
        msg: String,
    },
    #[error("schema error in {file}: missing column '{column}'")]
    SchemaError { file: String, column: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("json error in {0}: {1}")]
    Json(String, serde_json::Error),
}

impl Error {
    /// CLI exit code: 1 for validation/configuration errors, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotPositiveDefinite(_)
            | Error::NoConvergence(_)
            | Error::UnstablePhi(_)
            | Error::DenseCapExceeded(_, _) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
