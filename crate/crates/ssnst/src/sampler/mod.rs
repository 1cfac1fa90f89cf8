//! Posterior sampling: adaptive random-walk Metropolis within Gibbs, with
//! exact Gaussian imputation of missing responses between parameter sweeps.
//!
//! Parameters update in four fixed blocks — regression coefficients, log
//! standard deviations, range transforms, temporal block — each with its own
//! proposal scale adapted toward the target acceptance rate during warmup
//! (Robbins-Monro on the log scale, frozen afterwards). Chains run
//! independently on RNG substreams of one seed, so results are reproducible
//! regardless of thread scheduling.

pub mod checkpoint;
pub mod diagnostics;
pub mod imputation;

pub use diagnostics::{bulk_ess, diagnostics_table, mcse, split_rhat, ParamDiagnostics};
pub use imputation::{impute_all_slices, ImputationOp, SliceConditional};

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::likelihood::{log_posterior_parts, ModelStructure};
use crate::model::params::{ParamLayout, ParamVector, TemporalParams};
use crate::model::priors::PriorConfig;
use crate::model::ObservationPanel;
use crate::network::DistanceBundle;
use crate::temporal::{Link, TemporalSpec};

use checkpoint::Checkpoint;

/// Which parameter blocks the sweep updates; fixing a block pins it at its
/// initial value (useful for oracle tests and profiling runs).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockConfig {
    pub beta: bool,
    pub scales: bool,
    pub ranges: bool,
    pub temporal: bool,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { beta: true, scales: true, ranges: true, temporal: true }
    }
}

impl BlockConfig {
    fn enabled(&self) -> [bool; 4] {
        [self.beta, self.scales, self.ranges, self.temporal]
    }
}

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub chains: usize,
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    pub target_accept: f64,
    pub thin: usize,
    pub initial_scale: f64,
    pub blocks: BlockConfig,
    /// Write a checkpoint every this many iterations (0 disables).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Resume chains from checkpoints in `checkpoint_dir` when present.
    pub resume: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            chains: 4,
            iterations: 3000,
            warmup: 1500,
            seed: 1,
            target_accept: 0.234,
            thin: 1,
            initial_scale: 0.1,
            blocks: BlockConfig::default(),
            checkpoint_every: 500,
            checkpoint_dir: None,
            resume: false,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains < 1 {
            return Err(Error::ConfigInvalid("chains must be >= 1".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::ConfigInvalid(format!(
                "warmup {} must be smaller than iterations {}",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::ConfigInvalid("target_accept must lie in (0,1)".into()));
        }
        if self.thin < 1 {
            return Err(Error::ConfigInvalid("thin must be >= 1".into()));
        }
        if self.initial_scale < 0.0 {
            return Err(Error::ConfigInvalid("initial_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything a chain needs, shared read-only across workers.
pub struct FitProblem<'a> {
    pub panel: &'a ObservationPanel,
    pub bundle: &'a DistanceBundle,
    pub structure: &'a ModelStructure,
    pub priors: &'a PriorConfig,
    pub layout: ParamLayout,
}

impl<'a> FitProblem<'a> {
    pub fn new(
        panel: &'a ObservationPanel,
        bundle: &'a DistanceBundle,
        structure: &'a ModelStructure,
        priors: &'a PriorConfig,
    ) -> Result<Self> {
        priors.validate_for(&structure.temporal)?;
        if priors.alpha_max.len() != structure.components.len() {
            return Err(Error::ConfigInvalid(format!(
                "{} alpha_max bounds for {} components",
                priors.alpha_max.len(),
                structure.components.len()
            )));
        }
        let layout = ParamLayout::new(
            panel.n_beta(),
            priors.alpha_max.clone(),
            structure.temporal.clone(),
            panel.n_sites(),
        );
        Ok(FitProblem { panel, bundle, structure, priors, layout })
    }
}

/// One chain's retained output.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    /// draws × parameters, constrained scale.
    pub params: DMatrix<f64>,
    /// draws × missing cells, same order as `PosteriorDraws::missing_cells`.
    pub imputed: DMatrix<f64>,
    /// draws × T per-slice log densities.
    pub pointwise: DMatrix<f64>,
    /// Post-warmup acceptance rate per block.
    pub accept_rate: Vec<f64>,
    pub final_scales: Vec<f64>,
}

/// Joint posterior sample across chains.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub param_names: Vec<String>,
    pub chains: Vec<ChainDraws>,
    pub missing_cells: Vec<(usize, usize)>,
    pub n_times: usize,
}

impl PosteriorDraws {
    pub fn n_draws_per_chain(&self) -> usize {
        self.chains.first().map(|c| c.params.nrows()).unwrap_or(0)
    }

    pub fn total_draws(&self) -> usize {
        self.chains.iter().map(|c| c.params.nrows()).sum()
    }

    /// Stack all chains' parameter draws (chain-major).
    pub fn stacked_params(&self) -> DMatrix<f64> {
        let rows = self.total_draws();
        let cols = self.param_names.len();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for c in &self.chains {
            out.rows_mut(r, c.params.nrows()).copy_from(&c.params);
            r += c.params.nrows();
        }
        out
    }

    pub fn stacked_imputed(&self) -> DMatrix<f64> {
        let rows = self.total_draws();
        let cols = self.missing_cells.len();
        let mut out = DMatrix::zeros(rows, cols);
        let mut r = 0;
        for c in &self.chains {
            out.rows_mut(r, c.imputed.nrows()).copy_from(&c.imputed);
            r += c.imputed.nrows();
        }
        out
    }

    pub fn stacked_pointwise(&self) -> DMatrix<f64> {
        let rows = self.total_draws();
        let mut out = DMatrix::zeros(rows, self.n_times);
        let mut r = 0;
        for c in &self.chains {
            out.rows_mut(r, c.pointwise.nrows()).copy_from(&c.pointwise);
            r += c.pointwise.nrows();
        }
        out
    }

    /// Per-chain draws of one named parameter.
    pub fn chains_of(&self, param_idx: usize) -> Vec<Vec<f64>> {
        self.chains
            .iter()
            .map(|c| c.params.column(param_idx).iter().copied().collect())
            .collect()
    }

    /// Convergence table over all parameters.
    pub fn diagnostics(&self) -> Result<Vec<ParamDiagnostics>> {
        let by_param: Vec<Vec<Vec<f64>>> =
            (0..self.param_names.len()).map(|p| self.chains_of(p)).collect();
        diagnostics_table(&self.param_names, &by_param)
    }
}

/// OLS-based starting point: β from observed cells, residual variance split
/// half to the nugget and half across components, ranges at α_max/4, φ
/// terms at 0.5 through their transforms, and missing responses from
/// per-site linear interpolation in time (endpoints carried; fully missing
/// sites fall back to the fitted mean).
pub fn initial_state(problem: &FitProblem) -> Result<(ParamVector, DMatrix<f64>)> {
    let panel = problem.panel;
    let (s, t_len) = (panel.n_sites(), panel.n_times());
    let p = panel.n_beta();

    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    let mut n_obs = 0usize;
    for t in 0..t_len {
        for i in 0..s {
            if panel.observed[(i, t)] {
                let row = panel.x[t].row(i).transpose();
                xtx += &row * row.transpose();
                xty += &row * panel.y[(i, t)];
                n_obs += 1;
            }
        }
    }
    if n_obs == 0 {
        return Err(Error::ConfigInvalid("panel has no observed responses".into()));
    }
    // Tiny ridge keeps rank-deficient designs solvable.
    for k in 0..p {
        xtx[(k, k)] += 1e-8;
    }
    let beta = xtx
        .lu()
        .solve(&xty)
        .ok_or_else(|| Error::ConfigInvalid("OLS initialization failed".into()))?;

    let mut ssr = 0.0;
    for t in 0..t_len {
        for i in 0..s {
            if panel.observed[(i, t)] {
                let mu = panel.x[t].row(i).transpose().dot(&beta);
                ssr += (panel.y[(i, t)] - mu).powi(2);
            }
        }
    }
    let resid_var = (ssr / n_obs as f64).max(1e-6);
    let n_comp = problem.structure.components.len();
    let sigma0 = (resid_var / 2.0).sqrt();
    let sigma = vec![(resid_var / 2.0 / n_comp as f64).sqrt(); n_comp];
    let alpha: Vec<f64> = problem.priors.alpha_max.iter().map(|a| a / 4.0).collect();

    let temporal = match &problem.structure.temporal {
        TemporalSpec::Ar => TemporalParams::Ar { phi: 0.5 },
        TemporalSpec::VarSitewise { hierarchical } => TemporalParams::VarSitewise {
            phi: vec![0.5; s],
            hyper: hierarchical.then_some((0.5, 0.5)),
        },
        TemporalSpec::VarCovariate { link, n_covariates } => {
            let g0 = match link {
                Link::Logit01 => 0.0,               // logit(0.5)
                Link::TanhPm1 => 2.0 * 0.5f64.atanh(), // link⁻¹(0.5)
            };
            let mut gamma = vec![0.0; n_covariates + 1];
            gamma[0] = g0;
            TemporalParams::VarCovariate { gamma }
        }
        TemporalSpec::Var2nn { .. } => TemporalParams::Var2nn {
            diag: vec![0.5; s],
            neighbor: vec![[0.0, 0.0]; s],
        },
    };
    let params = ParamVector { beta: beta.clone(), sigma0, sigma, alpha, temporal };

    // Working response: observed values, interpolated gaps, fitted fallback.
    let mut y = DMatrix::zeros(s, t_len);
    for i in 0..s {
        let obs_t: Vec<usize> = (0..t_len).filter(|&t| panel.observed[(i, t)]).collect();
        for t in 0..t_len {
            y[(i, t)] = if panel.observed[(i, t)] {
                panel.y[(i, t)]
            } else if obs_t.is_empty() {
                panel.x[t].row(i).transpose().dot(&beta)
            } else {
                match (
                    obs_t.iter().rev().find(|&&u| u < t),
                    obs_t.iter().find(|&&u| u > t),
                ) {
                    (Some(&lo), Some(&hi)) => {
                        let w = (t - lo) as f64 / (hi - lo) as f64;
                        panel.y[(i, lo)] * (1.0 - w) + panel.y[(i, hi)] * w
                    }
                    (Some(&lo), None) => panel.y[(i, lo)],
                    (None, Some(&hi)) => panel.y[(i, hi)],
                    (None, None) => unreachable!(),
                }
            };
        }
    }
    Ok((params, y))
}

struct ChainState {
    rng: ChaCha20Rng,
    u: DVector<f64>,
    log_post: f64,
    y: DMatrix<f64>,
    scales: Vec<f64>,
    adapt_steps: Vec<u64>,
    accepted: Vec<u64>,
    proposed: Vec<u64>,
    start_iter: usize,
    // Warmup running moments per coordinate (Welford); they precondition the
    // block proposals so differently scaled coordinates mix together.
    welford_n: u64,
    welford_mean: Vec<f64>,
    welford_m2: Vec<f64>,
    retained_params: Vec<Vec<f64>>,
    retained_imputed: Vec<Vec<f64>>,
    retained_pointwise: Vec<Vec<f64>>,
}

impl ChainState {
    /// Per-coordinate proposal sd: the warmup sample sd once enough history
    /// exists, 1 before that.
    fn coord_sd(&self, k: usize) -> f64 {
        if self.welford_n >= 50 {
            (self.welford_m2[k] / (self.welford_n as f64 - 1.0)).sqrt().max(1e-8)
        } else {
            1.0
        }
    }

    fn welford_update(&mut self) {
        self.welford_n += 1;
        let n = self.welford_n as f64;
        for k in 0..self.u.len() {
            let delta = self.u[k] - self.welford_mean[k];
            self.welford_mean[k] += delta / n;
            self.welford_m2[k] += delta * (self.u[k] - self.welford_mean[k]);
        }
    }
}

fn eval_posterior(problem: &FitProblem, u: &DVector<f64>, y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let parts = log_posterior_parts(
        u,
        &problem.layout,
        problem.priors,
        problem.structure,
        problem.bundle,
        y,
        &problem.panel.x,
    )?;
    Ok((parts.log_posterior, parts.pointwise))
}

fn run_chain(
    problem: &FitProblem,
    config: &McmcConfig,
    chain_idx: usize,
    init: &(ParamVector, DMatrix<f64>),
) -> Result<ChainDraws> {
    let blocks = problem.layout.blocks();
    let enabled = config.blocks.enabled();
    let n_blocks = blocks.len();
    let missing = problem.panel.missing_cells();
    let t_len = problem.panel.n_times();

    let mut state = match (&config.checkpoint_dir, config.resume) {
        (Some(dir), true) => checkpoint::load(dir, chain_idx)?.map(|cp| {
            let mut rng = ChaCha20Rng::seed_from_u64(cp.seed);
            rng.set_stream(cp.rng_stream);
            rng.set_word_pos(cp.rng_word_pos);
            ChainState {
                rng,
                u: DVector::from_vec(cp.u.clone()),
                log_post: cp.log_post,
                y: DMatrix::from_column_slice(
                    problem.panel.n_sites(),
                    t_len,
                    &cp.y_work,
                ),
                scales: cp.scales.clone(),
                adapt_steps: cp.adapt_steps.clone(),
                accepted: cp.accepted.clone(),
                proposed: cp.proposed.clone(),
                start_iter: cp.iteration,
                welford_n: cp.welford_n,
                welford_mean: cp.welford_mean.clone(),
                welford_m2: cp.welford_m2.clone(),
                retained_params: cp.retained_params,
                retained_imputed: cp.retained_imputed,
                retained_pointwise: cp.retained_pointwise,
            }
        }),
        _ => None,
    };
    if state.is_none() {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        rng.set_stream(chain_idx as u64 + 1);
        let u = problem.layout.unconstrain(&init.0)?;
        let y = init.1.clone();
        let (lp, _) = eval_posterior(problem, &u, &y)?;
        state = Some(ChainState {
            rng,
            u,
            log_post: lp,
            y,
            scales: vec![config.initial_scale; n_blocks],
            adapt_steps: vec![0; n_blocks],
            accepted: vec![0; n_blocks],
            proposed: vec![0; n_blocks],
            start_iter: 0,
            welford_n: 0,
            welford_mean: vec![0.0; problem.layout.dim()],
            welford_m2: vec![0.0; problem.layout.dim()],
            retained_params: Vec::new(),
            retained_imputed: Vec::new(),
            retained_pointwise: Vec::new(),
        });
    }
    let mut st = state.unwrap();

    let result: Result<()> = (|| {
        for iter in st.start_iter..config.iterations {
            // Parameter blocks, fixed order.
            for (b, &(lo, hi)) in blocks.iter().enumerate() {
                if !enabled[b] {
                    continue;
                }
                let mut proposal = st.u.clone();
                for k in lo..hi {
                    let z: f64 = st.rng.sample(StandardNormal);
                    proposal[k] += st.scales[b] * st.coord_sd(k) * z;
                }
                let (lp_new, _) = eval_posterior(problem, &proposal, &st.y)?;
                let log_alpha = lp_new - st.log_post;
                let alpha = if st.log_post == f64::NEG_INFINITY {
                    1.0
                } else {
                    log_alpha.exp().min(1.0)
                };
                let uacc: f64 = st.rng.gen();
                let accept = uacc < alpha;
                if accept {
                    st.u = proposal;
                    st.log_post = lp_new;
                }
                if iter >= config.warmup {
                    st.proposed[b] += 1;
                    st.accepted[b] += accept as u64;
                } else {
                    // Robbins-Monro on the log proposal scale.
                    st.adapt_steps[b] += 1;
                    let eta = (st.adapt_steps[b] as f64).powf(-0.6);
                    let target = config.target_accept;
                    let new_log = st.scales[b].max(1e-12).ln() + eta * (alpha - target);
                    if config.initial_scale > 0.0 {
                        st.scales[b] = new_log.exp().clamp(1e-8, 1e3);
                    }
                }
            }

            // Preconditioner moments accumulate during warmup only.
            if iter < config.warmup {
                st.welford_update();
            }

            // Gibbs imputation of missing responses.
            if !missing.is_empty() {
                let (params, _) = problem.layout.constrain(&st.u)?;
                let (_, factor) = problem.structure.assemble_v(&params, problem.bundle)?;
                let phi = problem
                    .structure
                    .phi_matrix(&params, problem.panel.n_sites())?;
                let kappa = match params.temporal.scalar_phi() {
                    Some(p) => 1.0 / (1.0 - p * p),
                    None => 1.0,
                };
                let op = ImputationOp::new(&factor, phi, kappa);
                let x_beta: Vec<DVector<f64>> = (0..t_len)
                    .map(|t| &problem.panel.x[t] * &params.beta)
                    .collect();
                impute_all_slices(&op, &mut st.y, &x_beta, &problem.panel.observed, &mut st.rng)?;
                let (lp, _) = eval_posterior(problem, &st.u, &st.y)?;
                st.log_post = lp;
            }

            // Retain.
            if iter >= config.warmup && (iter - config.warmup) % config.thin == 0 {
                let (params, _) = problem.layout.constrain(&st.u)?;
                let (_, mut pointwise) = eval_posterior(problem, &st.u, &st.y)?;
                if pointwise.is_empty() {
                    // The separable route has no per-slice decomposition;
                    // the conditional VAR one is identical for scalar φ and
                    // supplies the WAIC units.
                    pointwise = crate::model::likelihood::loglik_var(
                        &params,
                        &st.y,
                        &problem.panel.x,
                        problem.structure,
                        problem.bundle,
                    )?
                    .1;
                }
                st.retained_params.push(problem.layout.constrained_values(&params));
                st.retained_imputed
                    .push(missing.iter().map(|&(si, ti)| st.y[(si, ti)]).collect());
                st.retained_pointwise.push(pointwise);
            }

            if config.checkpoint_every > 0
                && (iter + 1) % config.checkpoint_every == 0
            {
                if let Some(dir) = &config.checkpoint_dir {
                    checkpoint::save(dir, &make_checkpoint(&st, config, chain_idx, iter + 1))?;
                }
            }
        }
        Ok(())
    })();

    if let Err(e) = result {
        // Abort with a resumable checkpoint when a numerical error surfaces
        // mid-chain.
        if let Some(dir) = &config.checkpoint_dir {
            let _ = checkpoint::save(dir, &make_checkpoint(&st, config, chain_idx, st.start_iter));
        }
        return Err(e);
    }

    let n_ret = st.retained_params.len();
    let n_par = st.retained_params.first().map(|v| v.len()).unwrap_or(0);
    let params = DMatrix::from_fn(n_ret, n_par, |r, c| st.retained_params[r][c]);
    let imputed = DMatrix::from_fn(n_ret, missing.len(), |r, c| st.retained_imputed[r][c]);
    let pointwise = DMatrix::from_fn(n_ret, t_len, |r, c| st.retained_pointwise[r][c]);
    let accept_rate = st
        .accepted
        .iter()
        .zip(&st.proposed)
        .map(|(&a, &p)| if p == 0 { 0.0 } else { a as f64 / p as f64 })
        .collect();
    Ok(ChainDraws {
        params,
        imputed,
        pointwise,
        accept_rate,
        final_scales: st.scales.clone(),
    })
}

fn make_checkpoint(
    st: &ChainState,
    config: &McmcConfig,
    chain_idx: usize,
    iteration: usize,
) -> Checkpoint {
    Checkpoint {
        version: checkpoint::CHECKPOINT_VERSION,
        chain: chain_idx,
        iteration,
        seed: config.seed,
        rng_stream: st.rng.get_stream(),
        rng_word_pos: st.rng.get_word_pos(),
        u: st.u.iter().copied().collect(),
        log_post: st.log_post,
        y_work: st.y.as_slice().to_vec(),
        scales: st.scales.clone(),
        adapt_steps: st.adapt_steps.clone(),
        accepted: st.accepted.clone(),
        proposed: st.proposed.clone(),
        welford_n: st.welford_n,
        welford_mean: st.welford_mean.clone(),
        welford_m2: st.welford_m2.clone(),
        retained_params: st.retained_params.clone(),
        retained_imputed: st.retained_imputed.clone(),
        retained_pointwise: st.retained_pointwise.clone(),
    }
}

/// Draw from the joint posterior of parameters and missing responses.
///
/// `init_override` fixes the starting point (all chains share it);
/// otherwise [`initial_state`] provides it.
pub fn run_mcmc(
    problem: &FitProblem,
    config: &McmcConfig,
    init_override: Option<(ParamVector, DMatrix<f64>)>,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let n_obs_per_slice: Vec<usize> = (0..problem.panel.n_times())
        .map(|t| (0..problem.panel.n_sites()).filter(|&s| problem.panel.observed[(s, t)]).count())
        .collect();
    if n_obs_per_slice.iter().any(|&n| n == 0) {
        eprintln!("warning: some time slices have no observed responses; imputation will lean on the temporal structure alone");
    }
    let init = match init_override {
        Some(i) => i,
        None => initial_state(problem)?,
    };
    let chains: Vec<Result<ChainDraws>> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(problem, config, c, &init))
        .collect();
    let mut out = Vec::with_capacity(config.chains);
    for c in chains {
        out.push(c?);
    }
    let beta_names: Vec<String> = problem.panel.x_names.clone();
    let tags: Vec<String> = problem
        .structure
        .components
        .iter()
        .map(|c| match c.family_name() {
            "tail_up" => "tu".to_string(),
            "tail_down" => "td".to_string(),
            _ => "ed".to_string(),
        })
        .collect();
    Ok(PosteriorDraws {
        param_names: problem.layout.names(&beta_names, &tags),
        chains: out,
        missing_cells: problem.panel.missing_cells(),
        n_times: problem.panel.n_times(),
    })
}

/// Generic adaptive block random-walk Metropolis on an arbitrary log target;
/// reused by tests that need a sampler with a known posterior.
pub fn adaptive_rwm<F: FnMut(&DVector<f64>) -> f64>(
    mut target: F,
    init: DVector<f64>,
    blocks: &[(usize, usize)],
    iterations: usize,
    warmup: usize,
    target_accept: f64,
    initial_scale: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<DVector<f64>> {
    let mut u = init;
    let mut lp = target(&u);
    let mut scales = vec![initial_scale; blocks.len()];
    let mut steps = vec![0u64; blocks.len()];
    let mut out = Vec::with_capacity(iterations.saturating_sub(warmup));
    for iter in 0..iterations {
        for (b, &(lo, hi)) in blocks.iter().enumerate() {
            let mut prop = u.clone();
            for k in lo..hi {
                let z: f64 = rng.sample(StandardNormal);
                prop[k] += scales[b] * z;
            }
            let lp_new = target(&prop);
            let alpha = if lp == f64::NEG_INFINITY {
                1.0
            } else {
                (lp_new - lp).exp().min(1.0)
            };
            if rng.gen::<f64>() < alpha {
                u = prop;
                lp = lp_new;
            }
            if iter < warmup && initial_scale > 0.0 {
                steps[b] += 1;
                let eta = (steps[b] as f64).powf(-0.6);
                scales[b] = (scales[b].max(1e-12).ln() + eta * (alpha - target_accept))
                    .exp()
                    .clamp(1e-8, 1e3);
            }
        }
        if iter >= warmup {
            out.push(u.clone());
        }
    }
    out
}
