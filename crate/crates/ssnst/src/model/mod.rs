//! Model assembly: observation panel, design matrices, priors, parameter
//! transforms, and the log posterior in both the conditional VAR form and
//! the separable joint form.

pub mod design;
pub mod likelihood;
pub mod params;
pub mod priors;

pub use design::{apply_design, build_design, fourier_pair, CovariateTable, Design, Formula, Term};
pub use likelihood::{
    loglik_separable, loglik_var, log_posterior, log_posterior_parts, LikelihoodMethod,
    ModelStructure, PosteriorParts,
};
pub use params::{ParamLayout, ParamVector, TemporalParams};
pub use priors::{log_prior, PhiPrior, PriorConfig};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// S×T response with missingness mask plus per-time design matrices.
///
/// Covariates must be complete everywhere, including cells where the
/// response is missing.
#[derive(Debug, Clone)]
pub struct ObservationPanel {
    /// Response values; entries where `observed` is false are ignored
    /// (imputation provides them during fitting).
    pub y: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    /// One S×p design matrix per time slice; column 0 is the intercept.
    pub x: Vec<DMatrix<f64>>,
    pub site_ids: Vec<i64>,
    /// Time values used for Fourier terms and reporting.
    pub time_values: Vec<f64>,
    pub x_names: Vec<String>,
}

impl ObservationPanel {
    pub fn new(
        y: DMatrix<f64>,
        observed: DMatrix<bool>,
        x: Vec<DMatrix<f64>>,
        site_ids: Vec<i64>,
        time_values: Vec<f64>,
        x_names: Vec<String>,
    ) -> Result<Self> {
        let (s, t) = y.shape();
        if t < 2 {
            return Err(Error::ConfigInvalid(format!(
                "VAR likelihoods need T >= 2 time points, got {t}"
            )));
        }
        if observed.shape() != (s, t) {
            return Err(Error::DimensionMismatch("observed mask shape".into()));
        }
        if x.len() != t || site_ids.len() != s || time_values.len() != t {
            return Err(Error::DimensionMismatch(format!(
                "panel: {} design slices, {} site ids, {} time values for S={s}, T={t}",
                x.len(),
                site_ids.len(),
                time_values.len()
            )));
        }
        let p = x[0].ncols();
        for (ti, xt) in x.iter().enumerate() {
            if xt.nrows() != s || xt.ncols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "design slice {ti} is {:?}, expected {s}x{p}",
                    xt.shape()
                )));
            }
            if xt.iter().any(|v| !v.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "design slice {ti} contains non-finite covariates"
                )));
            }
            if xt.column(0).iter().any(|&v| v != 1.0) {
                return Err(Error::ConfigInvalid(format!(
                    "design slice {ti}: column 0 must be the intercept of ones"
                )));
            }
        }
        for ti in 0..t {
            for si in 0..s {
                if observed[(si, ti)] && !y[(si, ti)].is_finite() {
                    return Err(Error::ConfigInvalid(format!(
                        "observed cell (site {}, t {}) holds a non-finite response",
                        site_ids[si], ti
                    )));
                }
            }
        }
        if x_names.len() != p {
            return Err(Error::DimensionMismatch("x_names length".into()));
        }
        Ok(ObservationPanel { y, observed, x, site_ids, time_values, x_names })
    }

    pub fn n_sites(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_times(&self) -> usize {
        self.y.ncols()
    }

    pub fn n_beta(&self) -> usize {
        self.x[0].ncols()
    }

    /// (site, time) indices of missing cells in column-major (site fastest)
    /// order — the canonical order for imputation storage.
    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for t in 0..self.n_times() {
            for s in 0..self.n_sites() {
                if !self.observed[(s, t)] {
                    cells.push((s, t));
                }
            }
        }
        cells
    }

    pub fn n_observed(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }
}
