//! Simple kriging at unobserved space-time locations from posterior draws,
//! plus exceedance probabilities, proportion-above-threshold posteriors and
//! highest-density intervals.
//!
//! Method 1 (scalar-φ models) exploits the separable joint covariance: the
//! Kronecker inverse collapses so that each time slice is kriged with the
//! spatial matrices alone, and the conditional covariance stays separable.
//! Method 2 runs the VAR recursion on slice residuals and covers the
//! covariate-link case at new sites; site-specific φ (case 2a) has no value
//! at new sites and is rejected.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{
    assert_psd, cov_euclidean, cov_mixture, cov_tailup, cov_taildown, JitterPolicy,
    SpatialComponent,
};
use crate::model::likelihood::ModelStructure;
use crate::model::params::{ParamLayout, ParamVector, TemporalParams};
use crate::model::ObservationPanel;
use crate::network::{CrossBundle, DistanceBundle, Site};
use crate::sampler::PosteriorDraws;
use crate::temporal::{ar1_covariance, ar1_precision, TemporalSpec};

/// Sites whose cross-site predictive noise is drawn jointly; chunks are
/// fixed in global site order so results do not depend on the compute
/// batch partition.
const NOISE_GROUP: usize = 200;

/// What to predict and how.
#[derive(Debug, Clone)]
pub struct PredictionTask {
    pub sites: Vec<Site>,
    /// Per-time P×p design matrices built with the fit's recorded transform.
    pub x: Vec<DMatrix<f64>>,
    /// P×J standardized site covariates for the covariate-link case.
    pub phi_covariates: Option<DMatrix<f64>>,
    pub draw_subsample: usize,
    pub batch_size: usize,
    pub thresholds: Vec<f64>,
    pub hdi_mass: f64,
    pub seed: u64,
}

impl PredictionTask {
    pub fn defaults(sites: Vec<Site>, x: Vec<DMatrix<f64>>) -> Self {
        PredictionTask {
            sites,
            x,
            phi_covariates: None,
            draw_subsample: 1000,
            batch_size: 500,
            thresholds: vec![],
            hdi_mass: 0.95,
            seed: 1,
        }
    }
}

/// Geometry linking the observation set O to the prediction set P.
pub struct KrigingGeometry {
    /// Panel site indices forming O (sites with at least one observation).
    pub obs_idx: Vec<usize>,
    pub obs_bundle: DistanceBundle,
    pub cross: CrossBundle,
    pub pred_bundle: DistanceBundle,
}

/// Per-(site, t) posterior summaries plus per-t proportion-above draws.
#[derive(Debug, Clone)]
pub struct PredictionResult {
    pub site_ids: Vec<i64>,
    pub time_values: Vec<f64>,
    /// Average over draws of the per-draw kriging mean.
    pub mean: DMatrix<f64>,
    pub sd: DMatrix<f64>,
    pub hdi_lower: DMatrix<f64>,
    pub hdi_upper: DMatrix<f64>,
    /// Per threshold: P×T exceedance probability.
    pub exceedance: Vec<DMatrix<f64>>,
    /// Per threshold: draws×T proportion of prediction sites above.
    pub proportion_above: Vec<DMatrix<f64>>,
    pub draws_used: usize,
}

/// Fraction of draws above the threshold, per cell (draws in rows).
pub fn exceedance(cell_draws: &DMatrix<f64>, threshold: f64) -> DVector<f64> {
    let n = cell_draws.nrows() as f64;
    DVector::from_fn(cell_draws.ncols(), |c, _| {
        cell_draws.column(c).iter().filter(|&&v| v > threshold).count() as f64 / n
    })
}

/// Per-draw, per-t proportion of sites above the threshold. Input: one P×T
/// matrix per draw; output: draws×T.
pub fn proportion_above(draws: &[DMatrix<f64>], threshold: f64) -> DMatrix<f64> {
    let d = draws.len();
    let t = draws.first().map(|m| m.ncols()).unwrap_or(0);
    DMatrix::from_fn(d, t, |di, ti| {
        let m = &draws[di];
        let above = m.column(ti).iter().filter(|&&v| v > threshold).count();
        above as f64 / m.nrows() as f64
    })
}

/// Shortest contiguous interval containing ⌈mass·n⌉ sorted draws.
pub fn hdi(sample: &[f64], mass: f64) -> Result<(f64, f64)> {
    if sample.len() < 50 {
        return Err(Error::SampleTooSmall { needed: 50, got: sample.len() });
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::ConfigInvalid(format!("hdi mass {mass} outside (0,1)")));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let m = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = (sorted[0], sorted[m - 1]);
    let mut width = best.1 - best.0;
    for i in 1..=(n - m) {
        let w = sorted[i + m - 1] - sorted[i];
        if w < width {
            width = w;
            best = (sorted[i], sorted[i + m - 1]);
        }
    }
    Ok(best)
}

/// Spatial covariance between observation rows and prediction columns from
/// the same component parameters; the nugget enters only where an
/// observation and a prediction location coincide exactly.
pub fn cross_cov(
    components: &[SpatialComponent],
    cross: &CrossBundle,
    nugget: f64,
) -> Result<DMatrix<f64>> {
    let mut sum = DMatrix::zeros(cross.h.nrows(), cross.h.ncols());
    for c in components {
        sum += match c {
            SpatialComponent::Euclidean { form, sigma2, alpha } => {
                cov_euclidean(&cross.d, *form, *sigma2, *alpha)
            }
            SpatialComponent::TailUp { form, sigma2, alpha } => {
                cov_tailup(&cross.h, &cross.flow_conn, &cross.w, *form, *sigma2, *alpha)?
            }
            SpatialComponent::TailDown { form, sigma2, alpha } => cov_taildown(
                &cross.h,
                &cross.a,
                &cross.b,
                &cross.flow_conn,
                *form,
                *sigma2,
                *alpha,
            )?,
        };
    }
    if nugget > 0.0 {
        for j in 0..sum.ncols() {
            for i in 0..sum.nrows() {
                if cross.coincident[(i, j)] {
                    sum[(i, j)] += nugget;
                }
            }
        }
    }
    Ok(sum)
}

/// Deterministic subsample of stacked-draw ordinals (sorted, without
/// replacement).
fn subsample_indices(total: usize, want: usize, seed: u64) -> Vec<usize> {
    if want >= total {
        return (0..total).collect();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, total, want).into_vec();
    idx.sort_unstable();
    idx
}

struct DrawContext {
    params: ParamVector,
    components: Vec<SpatialComponent>,
    nugget: f64,
    v_factor: crate::kernels::SpdFactor,
    y_complete: DMatrix<f64>,
}

struct Shared<'a> {
    draws: &'a PosteriorDraws,
    layout: &'a ParamLayout,
    structure: &'a ModelStructure,
    panel: &'a ObservationPanel,
    geom: &'a KrigingGeometry,
    task: &'a PredictionTask,
}

impl<'a> Shared<'a> {
    fn prepare_draw(&self, stacked: &DMatrix<f64>, imputed: &DMatrix<f64>, d: usize) -> Result<DrawContext> {
        let row: Vec<f64> = stacked.row(d).iter().copied().collect();
        let params = self.layout.params_from_constrained(&row)?;
        let components = self.structure.components_with(&params);
        let nugget = params.sigma0 * params.sigma0;

        let mut v_oo = cov_mixture(&components, &self.geom.obs_bundle)?;
        for i in 0..v_oo.nrows() {
            v_oo[(i, i)] += nugget;
        }
        let v_factor = assert_psd(&v_oo, &JitterPolicy::default())?;

        // Complete the panel with this draw's imputations, then restrict to O.
        let mut y_full = self.panel.y.clone();
        for (k, &(si, ti)) in self.draws.missing_cells.iter().enumerate() {
            y_full[(si, ti)] = imputed[(d, k)];
        }
        let t_len = self.panel.n_times();
        let y_complete = DMatrix::from_fn(self.geom.obs_idx.len(), t_len, |i, t| {
            y_full[(self.geom.obs_idx[i], t)]
        });
        Ok(DrawContext { params, components, nugget, v_factor, y_complete })
    }

    /// Kriging weights `K_b = C_b' V_OO⁻¹` for one prediction-site block,
    /// together with C_b itself.
    fn kriger_block(&self, ctx: &DrawContext, lo: usize, hi: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let cross_b = self.geom.cross.columns(lo, hi);
        let c_b = cross_cov(&ctx.components, &cross_b, ctx.nugget)?;
        let k_b = ctx.v_factor.solve(&c_b).transpose();
        Ok((c_b, k_b))
    }

    fn obs_design(&self, t: usize) -> DMatrix<f64> {
        let p = self.panel.n_beta();
        DMatrix::from_fn(self.geom.obs_idx.len(), p, |i, k| {
            self.panel.x[t][(self.geom.obs_idx[i], k)]
        })
    }

    /// Observation-side residual matrix y − Xβ over O.
    fn obs_residuals(&self, ctx: &DrawContext) -> DMatrix<f64> {
        let t_len = self.panel.n_times();
        let n_o = self.geom.obs_idx.len();
        let mut r = DMatrix::zeros(n_o, t_len);
        for t in 0..t_len {
            let mu = self.obs_design(t) * &ctx.params.beta;
            for i in 0..n_o {
                r[(i, t)] = ctx.y_complete[(i, t)] - mu[i];
            }
        }
        r
    }

    /// Per-draw kriging means via the separable identity, processed in
    /// prediction-site batches: (Σ_ar1 ⊗ V)⁻¹ vec(R) = vec(V⁻¹ R Q), and
    /// c_OP' reintroduces Σ_ar1, cancelling Q up to rounding.
    fn mean_separable(&self, ctx: &DrawContext, phi: f64) -> Result<DMatrix<f64>> {
        let t_len = self.panel.n_times();
        let n_p = self.task.sites.len();
        let r = self.obs_residuals(ctx);
        let q = ar1_precision(phi, t_len)?;
        let temporal = ar1_covariance(phi, t_len)?;
        let solved = ctx.v_factor.solve(&r); // V⁻¹ R
        let w2 = solved * q * temporal; // S_O×T
        let mut mean = DMatrix::zeros(n_p, t_len);
        let batch = self.task.batch_size.max(1);
        let mut lo = 0;
        while lo < n_p {
            let hi = (lo + batch).min(n_p);
            let cross_b = self.geom.cross.columns(lo, hi);
            let c_b = cross_cov(&ctx.components, &cross_b, ctx.nugget)?;
            let pred_resid = c_b.transpose() * &w2; // b×T
            for t in 0..t_len {
                for p in lo..hi {
                    let mu = self.task.x[t].row(p).transpose().dot(&ctx.params.beta);
                    mean[(p, t)] = mu + pred_resid[(p - lo, t)];
                }
            }
            lo = hi;
        }
        Ok(mean)
    }

    /// Per-draw kriging means via the VAR recursion on slice residuals,
    /// processed in prediction-site batches (Φ at prediction sites is
    /// diagonal in every supported case, so batches never interact).
    fn mean_recursion(&self, ctx: &DrawContext) -> Result<DMatrix<f64>> {
        let t_len = self.panel.n_times();
        let n_o = self.geom.obs_idx.len();
        let n_p = self.task.sites.len();
        let phi_oo = self.phi_obs(&ctx.params)?;
        let phi_pp_diag = self.phi_pred_diag(&ctx.params)?;

        // Observation-side slice residuals y_t − μ_t are batch-independent.
        let r = self.obs_residuals(ctx);
        let mut slice_resid = DMatrix::zeros(n_o, t_len);
        for t in 0..t_len {
            let rt = DVector::from(r.column(t));
            let innov = if t == 0 {
                rt
            } else {
                &rt - &phi_oo * &DVector::from(r.column(t - 1))
            };
            slice_resid.set_column(t, &innov);
        }

        let mut mean = DMatrix::zeros(n_p, t_len);
        let batch = self.task.batch_size.max(1);
        let mut lo = 0;
        while lo < n_p {
            let hi = (lo + batch).min(n_p);
            let (_, k_b) = self.kriger_block(ctx, lo, hi)?;
            let kriged = &k_b * &slice_resid; // b×T spatial kriging of innovations
            for p in lo..hi {
                let mut prev_resid_p = 0.0;
                for t in 0..t_len {
                    let mu_fixed = self.task.x[t].row(p).transpose().dot(&ctx.params.beta);
                    let carry = if t == 0 { 0.0 } else { phi_pp_diag[p] * prev_resid_p };
                    let pred = mu_fixed + carry + kriged[(p - lo, t)];
                    mean[(p, t)] = pred;
                    prev_resid_p = pred - mu_fixed;
                }
            }
            lo = hi;
        }
        Ok(mean)
    }

    /// Φ restricted to the observation subset.
    fn phi_obs(&self, params: &ParamVector) -> Result<DMatrix<f64>> {
        let s = self.panel.n_sites();
        let full = self.structure.phi_matrix(params, s)?;
        let idx = &self.geom.obs_idx;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| full[(idx[i], idx[j])]))
    }

    /// Diagonal of Φ at prediction sites: scalar φ for case 1; the covariate
    /// link for case 2b; zero temporal carry for case 3 (its entries are
    /// tied to fitted sites); case 2a is rejected.
    fn phi_pred_diag(&self, params: &ParamVector) -> Result<DVector<f64>> {
        let n_p = self.task.sites.len();
        match (&self.structure.temporal, &params.temporal) {
            (TemporalSpec::Ar, TemporalParams::Ar { phi }) => {
                Ok(DVector::from_element(n_p, *phi))
            }
            (TemporalSpec::VarCovariate { link, n_covariates }, TemporalParams::VarCovariate { gamma }) => {
                let x = self.task.phi_covariates.as_ref().ok_or_else(|| {
                    Error::ConfigInvalid(
                        "case 2b prediction needs site covariates at prediction sites".into(),
                    )
                })?;
                if x.nrows() != n_p || x.ncols() != *n_covariates {
                    return Err(Error::DimensionMismatch(format!(
                        "prediction phi covariates are {:?}, expected {}x{}",
                        x.shape(),
                        n_p,
                        n_covariates
                    )));
                }
                Ok(DVector::from_fn(n_p, |sidx, _| {
                    let mut lin = gamma[0];
                    for j in 0..*n_covariates {
                        lin += gamma[j + 1] * x[(sidx, j)];
                    }
                    link.apply(lin)
                }))
            }
            (TemporalSpec::VarSitewise { .. }, _) => Err(Error::Case2aUnsupported),
            (TemporalSpec::Var2nn { .. }, _) => Ok(DVector::zeros(n_p)),
            _ => Err(Error::ConfigInvalid("temporal parameters do not match spec".into())),
        }
    }
}

fn finalize(
    shared: &Shared,
    mean_sum: DMatrix<f64>,
    cell_draws: Vec<Vec<f64>>,
    prop_counts: Vec<DMatrix<f64>>,
    n_draws: usize,
) -> Result<PredictionResult> {
    let n_p = shared.task.sites.len();
    let t_len = shared.panel.n_times();
    let mean = mean_sum / n_draws as f64;
    let mut sd = DMatrix::zeros(n_p, t_len);
    let mut lo = DMatrix::zeros(n_p, t_len);
    let mut hi = DMatrix::zeros(n_p, t_len);
    let mut exc: Vec<DMatrix<f64>> =
        shared.task.thresholds.iter().map(|_| DMatrix::zeros(n_p, t_len)).collect();
    for p in 0..n_p {
        for t in 0..t_len {
            let v = &cell_draws[p * t_len + t];
            let m: f64 = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0);
            sd[(p, t)] = var.sqrt();
            let (l, h) = hdi(v, shared.task.hdi_mass)?;
            lo[(p, t)] = l;
            hi[(p, t)] = h;
            for (k, &th) in shared.task.thresholds.iter().enumerate() {
                exc[k][(p, t)] = v.iter().filter(|&&x| x > th).count() as f64 / v.len() as f64;
            }
        }
    }
    let proportion = prop_counts
        .into_iter()
        .map(|counts| counts / n_p as f64)
        .collect();
    Ok(PredictionResult {
        site_ids: shared.task.sites.iter().map(|s| s.site_id).collect(),
        time_values: shared.panel.time_values.clone(),
        mean,
        sd,
        hdi_lower: lo,
        hdi_upper: hi,
        exceedance: exc,
        proportion_above: proportion,
        draws_used: n_draws,
    })
}

fn run_prediction(shared: &Shared, use_recursion: bool) -> Result<PredictionResult> {
    let t_len = shared.panel.n_times();
    let n_p = shared.task.sites.len();
    if shared.task.x.len() != t_len {
        return Err(Error::DimensionMismatch(format!(
            "prediction design has {} slices, panel has {t_len}",
            shared.task.x.len()
        )));
    }
    for (t, xt) in shared.task.x.iter().enumerate() {
        if xt.nrows() != n_p || xt.ncols() != shared.panel.n_beta() {
            return Err(Error::DimensionMismatch(format!(
                "prediction design slice {t} is {:?}",
                xt.shape()
            )));
        }
    }
    let stacked = shared.draws.stacked_params();
    let imputed = shared.draws.stacked_imputed();
    let picks = subsample_indices(stacked.nrows(), shared.task.draw_subsample, shared.task.seed);
    let n_draws = picks.len();
    if n_draws == 0 {
        return Err(Error::InsufficientDraws { needed: 1, got: 0 });
    }

    let mut mean_sum = DMatrix::zeros(n_p, t_len);
    let mut cell_draws: Vec<Vec<f64>> = vec![Vec::with_capacity(n_draws); n_p * t_len];
    let mut prop_counts: Vec<DMatrix<f64>> = shared
        .task
        .thresholds
        .iter()
        .map(|_| DMatrix::zeros(n_draws, t_len))
        .collect();

    // Cross-site noise is drawn jointly within fixed-size groups in global
    // site order, so results do not depend on `batch_size`.
    let groups: Vec<(usize, usize)> = (0..n_p)
        .step_by(NOISE_GROUP)
        .map(|lo| (lo, (lo + NOISE_GROUP).min(n_p)))
        .collect();

    // Draws are independent given the shared read-only state; run them in
    // parallel and merge in draw order so the result is deterministic.
    let per_draw: Vec<Result<(DMatrix<f64>, DMatrix<f64>)>> = picks
        .par_iter()
        .enumerate()
        .map(|(ord, &d)| {
            let ctx = shared.prepare_draw(&stacked, &imputed, d)?;
            let scalar_phi = ctx.params.temporal.scalar_phi();
            let mean = if use_recursion || scalar_phi.is_none() {
                shared.mean_recursion(&ctx)?
            } else {
                shared.mean_separable(&ctx, scalar_phi.unwrap())?
            };

            // Predictive noise with the simple-kriging conditional
            // covariance: kron(Σ_ar1, G) per group for scalar φ,
            // per-slice G otherwise.
            let mut draw_matrix = mean.clone();
            for (g, &(glo, ghi)) in groups.iter().enumerate() {
                let gsize = ghi - glo;
                let (c_g, k_g) = shared.kriger_block(&ctx, glo, ghi)?;
                let mut v_pp_g =
                    cov_mixture(&ctx.components, &shared.geom.pred_bundle.slice(glo, ghi))?;
                for i in 0..gsize {
                    v_pp_g[(i, i)] += ctx.nugget;
                }
                let cond = &v_pp_g - &k_g * &c_g;
                let g_factor = assert_psd(
                    &cond,
                    &JitterPolicy { initial_rel: 1e-9, growth: 10.0, max_escalations: 5 },
                )?;
                let mut rng = ChaCha20Rng::seed_from_u64(shared.task.seed ^ 0x9e37_79b9_7f4a_7c15);
                rng.set_stream(((ord as u64) << 20) | (g as u64 + 1));
                let z = DMatrix::from_fn(gsize, t_len, |_, _| rng.sample::<f64, _>(StandardNormal));
                let noise = match scalar_phi {
                    Some(phi) => {
                        let temporal = ar1_covariance(phi, t_len)?;
                        let lt = assert_psd(&temporal, &JitterPolicy::default())?;
                        g_factor.l() * z * lt.l().transpose()
                    }
                    None => g_factor.l() * z,
                };
                for p in glo..ghi {
                    for t in 0..t_len {
                        draw_matrix[(p, t)] += noise[(p - glo, t)];
                    }
                }
            }
            Ok((mean, draw_matrix))
        })
        .collect();

    for (ord, item) in per_draw.into_iter().enumerate() {
        let (mean, draw_matrix) = item?;
        mean_sum += &mean;
        for p in 0..n_p {
            for t in 0..t_len {
                cell_draws[p * t_len + t].push(draw_matrix[(p, t)]);
            }
        }
        for (k, &th) in shared.task.thresholds.iter().enumerate() {
            for t in 0..t_len {
                let above = (0..n_p).filter(|&p| draw_matrix[(p, t)] > th).count();
                prop_counts[k][(ord, t)] = above as f64;
            }
        }
    }
    finalize(shared, mean_sum, cell_draws, prop_counts, n_draws)
}

/// Simple kriging from posterior draws (method 1). Models without a scalar
/// φ fall back to the VAR recursion of [`krige_var_recursion`].
pub fn krige(
    draws: &PosteriorDraws,
    layout: &ParamLayout,
    structure: &ModelStructure,
    panel: &ObservationPanel,
    geom: &KrigingGeometry,
    task: &PredictionTask,
) -> Result<PredictionResult> {
    let shared = Shared { draws, layout, structure, panel, geom, task };
    run_prediction(&shared, false)
}

/// Slice-recursion prediction (method 2): VAR means at observation and
/// prediction sites plus spatial-only kriging of the slice residuals.
pub fn krige_var_recursion(
    draws: &PosteriorDraws,
    layout: &ParamLayout,
    structure: &ModelStructure,
    panel: &ObservationPanel,
    geom: &KrigingGeometry,
    task: &PredictionTask,
) -> Result<PredictionResult> {
    let shared = Shared { draws, layout, structure, panel, geom, task };
    run_prediction(&shared, true)
}

/// Observation subset and geometry for a panel fitted on `network` (None
/// for Euclidean-only models) and a prediction site list.
pub fn build_geometry(
    panel: &ObservationPanel,
    panel_sites: &[Site],
    network: Option<&crate::network::StreamNetwork>,
    pred_sites: &[Site],
) -> Result<KrigingGeometry> {
    let obs_idx: Vec<usize> = (0..panel.n_sites())
        .filter(|&s| (0..panel.n_times()).any(|t| panel.observed[(s, t)]))
        .collect();
    if obs_idx.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    let obs_sites: Vec<Site> = obs_idx.iter().map(|&i| panel_sites[i].clone()).collect();
    match network {
        Some(net) => {
            let obs_bundle = net.bundle_for_sites(&obs_sites)?;
            let pred_bundle = net.bundle_for_sites(pred_sites)?;
            let cross = net.with_sites(obs_sites)?.cross_bundle(pred_sites)?;
            Ok(KrigingGeometry { obs_idx, obs_bundle, cross, pred_bundle })
        }
        None => {
            let obs_bundle = DistanceBundle::from_coordinates(&obs_sites);
            let pred_bundle = DistanceBundle::from_coordinates(pred_sites);
            let cross = euclidean_cross(&obs_sites, pred_sites);
            Ok(KrigingGeometry { obs_idx, obs_bundle, cross, pred_bundle })
        }
    }
}

fn euclidean_cross(obs: &[Site], pred: &[Site]) -> CrossBundle {
    let (n, m) = (obs.len(), pred.len());
    let mut d = DMatrix::zeros(n, m);
    let mut coincident = DMatrix::from_element(n, m, false);
    for i in 0..n {
        for j in 0..m {
            let dx = obs[i].x - pred[j].x;
            let dy = obs[i].y - pred[j].y;
            d[(i, j)] = (dx * dx + dy * dy).sqrt();
            coincident[(i, j)] = d[(i, j)] == 0.0 && obs[i].site_id == pred[j].site_id;
        }
    }
    CrossBundle {
        h: DMatrix::zeros(n, m),
        flow_conn: DMatrix::from_element(n, m, false),
        a: DMatrix::zeros(n, m),
        b: DMatrix::zeros(n, m),
        d,
        w: DMatrix::zeros(n, m),
        coincident,
    }
}
