//! Temporal structure: transition matrices for the four autoregression
//! cases, the stationary AR(1) covariance and its tridiagonal inverse, and
//! Kronecker-structured operators for the separable joint covariance.
//!
//! Stacking convention throughout: vectors of length S·T are time-major,
//! `[y_1', y_2', ..., y_T']'`, so the joint covariance is
//! `Σ_ar1(φ) ⊗ V` with V the S×S spatial matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::SpdFactor;

/// Link mapping a linear predictor to an autoregression coefficient
/// (covariate-driven case only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    /// Inverse logit, range (0, 1).
    #[serde(rename = "logit_01")]
    Logit01,
    /// (e^x - 1)/(e^x + 1), range (-1, 1).
    #[serde(rename = "tanh_pm1")]
    TanhPm1,
}

impl Link {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Logit01 => 1.0 / (1.0 + (-x).exp()),
            Link::TanhPm1 => {
                // (e^x - 1)/(e^x + 1) = tanh(x/2), written via expm1 for
                // accuracy near 0.
                let e = x.exp_m1();
                e / (e + 2.0)
            }
        }
    }
}

/// Which sites may feed a site's temporal term in the 2-nearest-neighbour case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeighborMode {
    TwoNearest,
    UpstreamOnly,
}

/// The four autoregression structures.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalSpec {
    /// Case 1: Φ = φ·I with a single φ shared by all sites.
    Ar,
    /// Case 2a: diagonal Φ with site-specific φ_s; optionally hierarchical
    /// hyperparameters (μ_φ, σ_φ) over the sites.
    VarSitewise { hierarchical: bool },
    /// Case 2b: diagonal Φ with φ_s = link(γ₀ + Σ_j γ_j X_js) from
    /// site-level covariates.
    VarCovariate { link: Link, n_covariates: usize },
    /// Case 3: each row has its own diagonal entry plus entries at its two
    /// nearest neighbours by total hydrologic distance.
    Var2nn { neighbor_mode: NeighborMode },
}

impl TemporalSpec {
    /// Length of the temporal parameter block (excluding hyperparameters).
    pub fn n_params(&self, n_sites: usize) -> usize {
        match self {
            TemporalSpec::Ar => 1,
            TemporalSpec::VarSitewise { .. } => n_sites,
            TemporalSpec::VarCovariate { n_covariates, .. } => n_covariates + 1,
            TemporalSpec::Var2nn { .. } => 3 * n_sites,
        }
    }

    pub fn is_scalar(&self) -> bool {
        matches!(self, TemporalSpec::Ar)
    }
}

/// Per-site neighbour information for the 2-NN case.
#[derive(Debug, Clone)]
pub struct NeighborInfo {
    /// Two nearest sites (by total hydrologic distance, ties to the smaller
    /// site id), per site.
    pub neighbors: Vec<[usize; 2]>,
    /// `upstream[s][k]` is true when neighbour k is flow-connected to s and
    /// lies upstream of it.
    pub upstream: Vec<[bool; 2]>,
}

/// Derive 2-NN sets from a total hydrologic distance matrix.
///
/// `site_ids` break distance ties; `upstream_of(i, j)` must say whether site
/// j lies upstream of site i.
pub fn neighbor_info(
    h: &DMatrix<f64>,
    site_ids: &[i64],
    upstream_of: impl Fn(usize, usize) -> bool,
) -> Result<NeighborInfo> {
    let s = h.nrows();
    if s < 3 {
        return Err(Error::ConfigInvalid(format!(
            "2-NN structure needs at least 3 sites, got {s}"
        )));
    }
    let mut neighbors = Vec::with_capacity(s);
    let mut upstream = Vec::with_capacity(s);
    for i in 0..s {
        let mut others: Vec<usize> = (0..s).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| {
            h[(i, a)]
                .partial_cmp(&h[(i, b)])
                .unwrap()
                .then(site_ids[a].cmp(&site_ids[b]))
        });
        let pair = [others[0], others[1]];
        neighbors.push(pair);
        upstream.push([upstream_of(i, pair[0]), upstream_of(i, pair[1])]);
    }
    Ok(NeighborInfo { neighbors, upstream })
}

/// Everything `build_phi` may need beyond the raw parameters.
#[derive(Debug, Clone, Default)]
pub struct PhiContext {
    /// S×J standardized site-level covariates for the covariate-link case.
    pub site_covariates: Option<DMatrix<f64>>,
    /// Neighbour sets for the 2-NN case.
    pub neighbors: Option<NeighborInfo>,
}

/// Assemble the S×S transition matrix for one parameter vector.
///
/// Parameter layout per case: `[φ]`; `[φ_1..φ_S]`; `[γ_0..γ_J]`;
/// `[diag_1..diag_S, off_{1,1}, off_{1,2}, ..., off_{S,1}, off_{S,2}]`.
/// Returns `UnstablePhi` when the spectral radius reaches 1 — a rejection
/// signal during sampling, not a crash.
pub fn build_phi(
    spec: &TemporalSpec,
    params: &[f64],
    n_sites: usize,
    ctx: &PhiContext,
) -> Result<DMatrix<f64>> {
    let expected = spec.n_params(n_sites);
    if params.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "temporal parameters: expected {expected}, got {}",
            params.len()
        )));
    }
    let gate_diag = |vals: &[f64]| -> Result<()> {
        let worst = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if worst >= 1.0 {
            Err(Error::UnstablePhi(worst))
        } else {
            Ok(())
        }
    };
    match spec {
        TemporalSpec::Ar => {
            gate_diag(params)?;
            Ok(DMatrix::identity(n_sites, n_sites) * params[0])
        }
        TemporalSpec::VarSitewise { .. } => {
            gate_diag(params)?;
            Ok(DMatrix::from_diagonal(&DVector::from_row_slice(params)))
        }
        TemporalSpec::VarCovariate { link, n_covariates } => {
            let x = ctx
                .site_covariates
                .as_ref()
                .ok_or_else(|| Error::ConfigInvalid("case 2b requires site covariates".into()))?;
            if x.nrows() != n_sites || x.ncols() != *n_covariates {
                return Err(Error::DimensionMismatch(format!(
                    "site covariates are {:?}, expected {}x{}",
                    x.shape(),
                    n_sites,
                    n_covariates
                )));
            }
            let mut phi = DMatrix::zeros(n_sites, n_sites);
            for s in 0..n_sites {
                let mut lin = params[0];
                for j in 0..*n_covariates {
                    lin += params[j + 1] * x[(s, j)];
                }
                phi[(s, s)] = link.apply(lin);
            }
            Ok(phi)
        }
        TemporalSpec::Var2nn { neighbor_mode } => {
            let info = ctx
                .neighbors
                .as_ref()
                .ok_or_else(|| Error::ConfigInvalid("case 3 requires neighbour sets".into()))?;
            let mut phi = DMatrix::zeros(n_sites, n_sites);
            for s in 0..n_sites {
                phi[(s, s)] = params[s];
                for k in 0..2 {
                    let keep = match neighbor_mode {
                        NeighborMode::TwoNearest => true,
                        NeighborMode::UpstreamOnly => info.upstream[s][k],
                    };
                    if keep {
                        // rows are "to", columns are "from"
                        phi[(s, info.neighbors[s][k])] = params[n_sites + 2 * s + k];
                    }
                }
            }
            let rho = spectral_radius(&phi)?;
            if rho >= 1.0 {
                return Err(Error::UnstablePhi(rho));
            }
            Ok(phi)
        }
    }
}

/// Largest eigenvalue modulus via power iteration (relative tolerance 1e-10,
/// 10 000-iteration cap), with a dense eigensolve fallback for S ≤ 64.
pub fn spectral_radius(phi: &DMatrix<f64>) -> Result<f64> {
    const MAX_ITER: usize = 10_000;
    const TOL: f64 = 1e-10;
    let n = phi.nrows();
    if n != phi.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "spectral_radius needs a square matrix, got {:?}",
            phi.shape()
        )));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if phi.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    // Deterministic non-degenerate start vector.
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sin() * 0.25);
    x /= x.norm();
    let mut est = 0.0;
    for _ in 0..MAX_ITER {
        let y = phi * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return Ok(0.0); // hit the nilpotent kernel; all eigenvalues 0 on this cycle
        }
        let prev = est;
        est = norm;
        x = y / norm;
        if (est - prev).abs() <= TOL * est.max(1e-300) {
            return Ok(est);
        }
    }
    if n <= 64 {
        return Ok(dense_spectral_radius(phi));
    }
    Err(Error::NoConvergence(MAX_ITER))
}

fn dense_spectral_radius(phi: &DMatrix<f64>) -> f64 {
    phi.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Stationary AR(1) covariance with unit innovation variance:
/// entry (t, u) = φ^|t-u| / (1 - φ²).
pub fn ar1_covariance(phi: f64, t: usize) -> Result<DMatrix<f64>> {
    if phi.abs() >= 1.0 {
        return Err(Error::NonStationaryPhi(phi));
    }
    let scale = 1.0 / (1.0 - phi * phi);
    Ok(DMatrix::from_fn(t, t, |r, c| {
        phi.powi((r as i32 - c as i32).abs()) * scale
    }))
}

/// Tridiagonal inverse of [`ar1_covariance`]: first/last diagonal 1,
/// interior diagonal 1 + φ², off-diagonal -φ. For T = 1 this degenerates to
/// the scalar 1 - φ².
pub fn ar1_precision(phi: f64, t: usize) -> Result<DMatrix<f64>> {
    if phi.abs() >= 1.0 {
        return Err(Error::NonStationaryPhi(phi));
    }
    if t == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0 - phi * phi));
    }
    let mut q = DMatrix::zeros(t, t);
    for i in 0..t {
        q[(i, i)] = if i == 0 || i == t - 1 { 1.0 } else { 1.0 + phi * phi };
        if i + 1 < t {
            q[(i, i + 1)] = -phi;
            q[(i + 1, i)] = -phi;
        }
    }
    Ok(q)
}

/// log det of the stationary AR(1) covariance: det = 1/(1-φ²) for any T ≥ 1.
pub fn ar1_log_det(phi: f64) -> f64 {
    -(1.0 - phi * phi).ln()
}

/// Apply `(Σ_ar1(φ) ⊗ Σ_S)⁻¹` to a time-major stacked vector without
/// forming the S·T × S·T matrix: columnwise spatial Cholesky solves, then
/// the tridiagonal temporal precision across time.
pub fn separable_precision_apply(
    spatial_chol: &SpdFactor,
    phi: f64,
    t: usize,
    vector: &DVector<f64>,
) -> Result<DVector<f64>> {
    let s = spatial_chol.dim();
    if vector.len() != s * t {
        return Err(Error::DimensionMismatch(format!(
            "stacked vector has length {}, expected {}x{}",
            vector.len(),
            s,
            t
        )));
    }
    // Columns of Y are the time slices; (A ⊗ B)⁻¹ vec(Y) = vec(B⁻¹ Y A⁻¹).
    let y = DMatrix::from_column_slice(s, t, vector.as_slice());
    let solved = spatial_chol.solve(&y);
    let q = ar1_precision(phi, t)?;
    let out = solved * q;
    Ok(DVector::from_column_slice(out.as_slice()))
}

/// Dense separable joint covariance `Σ_ar1(φ) ⊗ V`: block (t, u) is
/// φ^|t-u| V / (1 - φ²). Guarded by a configurable size cap.
pub fn var1_block_covariance(
    spatial_cov: &DMatrix<f64>,
    phi: f64,
    t: usize,
    dense_cap: usize,
) -> Result<DMatrix<f64>> {
    let s = spatial_cov.nrows();
    if s * t > dense_cap {
        return Err(Error::DenseCapExceeded(s * t, dense_cap));
    }
    let temporal = ar1_covariance(phi, t)?;
    Ok(temporal.kronecker(spatial_cov))
}

/// Default cap on dense S·T × S·T assemblies.
pub const DEFAULT_DENSE_CAP: usize = 4000;
