//! Pipeline stages behind the CLI: assemble a fit problem from files,
//! run the sampler, predict at new sites, and score against held-out truth.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::kernels::SpatialComponent;
use crate::metrics::{coverage, crps_sample, mcse_rank, rmspe, waic, EvaluationReport};
use crate::model::likelihood::{LikelihoodMethod, ModelStructure};
use crate::model::{build_design, CovariateTable, Design, Formula, ObservationPanel};
use crate::network::{DistanceBundle, Site, StreamNetwork};
use crate::predictor::{self, hdi, PredictionTask};
use crate::sampler::{run_mcmc, FitProblem, PosteriorDraws};
use crate::temporal::{neighbor_info, PhiContext, TemporalSpec};

use super::config::RunConfig;
use super::formats::{self, Manifest, ObservationTable, PredictionTable, TruthRow};
use super::simulate;
use super::tables;

/// Everything assembled from config + input files for one model.
pub struct Assembled {
    pub network: Option<StreamNetwork>,
    pub panel_sites: Vec<Site>,
    pub panel: ObservationPanel,
    pub bundle: DistanceBundle,
    pub structure: ModelStructure,
    pub priors: crate::model::PriorConfig,
    pub design: Design,
    pub formula: Formula,
    pub holdout_rows: Vec<TruthRow>,
    /// φ-covariate standardization (mean, sd) per column, covariate-link case.
    pub phi_transforms: Vec<(f64, f64)>,
    pub phi_covariate_names: Vec<String>,
}

fn site_subset(sites: &[Site], ids: &[i64]) -> Result<Vec<Site>> {
    ids.iter()
        .map(|id| {
            sites
                .iter()
                .find(|s| s.site_id == *id)
                .cloned()
                .ok_or(Error::DanglingReference { kind: "observation site", id: *id, target: *id })
        })
        .collect()
}

/// Mask a fraction of the observed cells for testing; deterministic in
/// (seed, fraction) with cells visited in time-major order.
fn apply_holdout(
    table: &mut ObservationTable,
    fraction: f64,
    seed: u64,
) -> Vec<TruthRow> {
    let mut rows = Vec::new();
    if fraction <= 0.0 {
        return rows;
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0x401d);
    let (s, t_len) = table.y.shape();
    for t in 0..t_len {
        for i in 0..s {
            let flip: f64 = rng.gen();
            if table.observed[(i, t)] && flip < fraction {
                table.observed[(i, t)] = false;
                rows.push(TruthRow {
                    site_id: table.site_ids[i],
                    t_index: t,
                    t_value: table.time_values[t],
                    y_true: table.y[(i, t)],
                    block: false,
                });
            }
        }
    }
    rows
}

/// Standardize site-level φ covariates; values must be constant over time.
fn phi_covariates_from(
    table: &CovariateTable,
    names: &[String],
    n_sites: usize,
) -> Result<(DMatrix<f64>, Vec<(f64, f64)>)> {
    let mut x = DMatrix::zeros(n_sites, names.len());
    let mut transforms = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let col = table.column(name)?;
        for s in 0..n_sites {
            let v = col[(s, 0)];
            for t in 1..col.ncols() {
                if (col[(s, t)] - v).abs() > 1e-9 {
                    return Err(Error::ConfigInvalid(format!(
                        "phi covariate '{name}' varies over time at site index {s}; case 2b needs site-constant covariates"
                    )));
                }
            }
            x[(s, j)] = v;
        }
        let mean = x.column(j).sum() / n_sites as f64;
        let var = x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n_sites as f64;
        let sd = var.sqrt().max(1e-12);
        for s in 0..n_sites {
            x[(s, j)] = (x[(s, j)] - mean) / sd;
        }
        transforms.push((mean, sd));
    }
    Ok((x, transforms))
}

/// Build the in-memory model from a config and a loaded observation table.
/// The holdout mask is a deterministic function of (seed, fraction), so
/// later stages reassemble the identical panel the fit saw.
pub fn assemble(
    config: &RunConfig,
    mut table: ObservationTable,
    all_sites: Vec<Site>,
    network_segments: Option<Vec<crate::network::Segment>>,
) -> Result<Assembled> {
    let holdout_rows = apply_holdout(&mut table, config.holdout.fraction, config.holdout.seed);

    let panel_sites = site_subset(&all_sites, &table.site_ids)?;
    let network = match network_segments {
        Some(segs) => {
            let weighting = config.model.weighting.build(&segs)?;
            let mut net = StreamNetwork::build(segs, panel_sites.clone())?;
            net.compute_afv(&weighting)?;
            Some(net)
        }
        None => None,
    };
    let bundle = match &network {
        Some(net) => net.distance_bundle()?,
        None => DistanceBundle::from_coordinates(&panel_sites),
    };

    let formula = config.model.formula();
    let design = build_design(&table.covariates, &formula, table.site_ids.len(), &table.time_values)?;
    let panel = ObservationPanel::new(
        table.y.clone(),
        table.observed.clone(),
        design.x.clone(),
        table.site_ids.clone(),
        table.time_values.clone(),
        design.names.clone(),
    )?;

    let temporal = config.model.temporal.spec();
    let (phi_ctx, phi_transforms, phi_covariate_names) = match &config.model.temporal {
        super::config::TemporalConfig::VarCovariate { covariates, .. } => {
            let (x, tr) = phi_covariates_from(&table.covariates, covariates, panel.n_sites())?;
            (
                PhiContext { site_covariates: Some(x), neighbors: None },
                tr,
                covariates.clone(),
            )
        }
        super::config::TemporalConfig::Var2nn { .. } => {
            let info = neighbor_info(&bundle.h, &bundle.site_ids, |i, j| {
                bundle.flow_conn[(i, j)] && panel_sites[j].updist > panel_sites[i].updist
            })?;
            (PhiContext { site_covariates: None, neighbors: Some(info) }, vec![], vec![])
        }
        _ => (PhiContext::default(), vec![], vec![]),
    };

    let components: Result<Vec<SpatialComponent>> =
        config.model.components.iter().map(|c| c.build()).collect();
    let components = components?;
    if components.iter().any(|c| !matches!(c, SpatialComponent::Euclidean { .. }))
        && network.is_none()
    {
        return Err(Error::NetworkRequired);
    }
    let method = match config.model.method.as_deref() {
        Some("separable") => LikelihoodMethod::Separable,
        _ => LikelihoodMethod::VarRecursion,
    };
    if method == LikelihoodMethod::Separable && !temporal.is_scalar() {
        return Err(Error::UnsupportedCase("separable likelihood needs the scalar-φ case"));
    }
    let structure = ModelStructure::new(components, temporal, phi_ctx, method);

    let mut priors =
        crate::model::PriorConfig::defaults(&structure.components, &structure.temporal, &bundle)?;
    if let Some(v) = config.priors.beta_sd {
        priors.beta_sd = v;
    }
    if let Some(v) = config.priors.sigma0_bound {
        priors.sigma0_bound = v;
    }
    if let Some(v) = config.priors.sigma_bound {
        priors.sigma_bound = v;
    }
    if let Some(v) = &config.priors.alpha_max {
        if v.len() != structure.components.len() {
            return Err(Error::ConfigInvalid(format!(
                "alpha_max override has {} entries for {} components",
                v.len(),
                structure.components.len()
            )));
        }
        priors.alpha_max = v.clone();
    }
    if let Some(p) = &config.priors.phi {
        priors.phi = match p {
            super::config::PhiPriorConfig::Uniform => crate::model::PhiPrior::Uniform,
            super::config::PhiPriorConfig::TruncNormal { mean, sd } => {
                crate::model::PhiPrior::TruncNormal { mean: *mean, sd: *sd }
            }
            super::config::PhiPriorConfig::Hierarchical { mu_mean, mu_sd, sigma_bound } => {
                crate::model::PhiPrior::Hierarchical {
                    mu_mean: *mu_mean,
                    mu_sd: *mu_sd,
                    sigma_bound: *sigma_bound,
                }
            }
            super::config::PhiPriorConfig::GammaNormal { sd } => {
                crate::model::PhiPrior::GammaNormal { sd: *sd }
            }
        };
    }

    Ok(Assembled {
        network,
        panel_sites,
        panel,
        bundle,
        structure,
        priors,
        design,
        formula,
        holdout_rows,
        phi_transforms,
        phi_covariate_names,
    })
}

/// Load the input files named by a config.
pub fn load_inputs(
    config: &RunConfig,
) -> Result<(ObservationTable, Vec<Site>, Option<Vec<crate::network::Segment>>)> {
    let obs_path = config
        .paths
        .observations
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("paths.observations is required".into()))?;
    let sites_path = config
        .paths
        .sites
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("paths.sites is required".into()))?;
    let table = formats::read_observations(obs_path)?;
    let sites = formats::read_sites(sites_path)?;
    let segments = match &config.paths.network {
        Some(p) => Some(formats::read_network(p)?),
        None => None,
    };
    Ok((table, sites, segments))
}

/// `simulate` subcommand: write the scenario's files into the output dir.
pub fn cmd_simulate(config: &RunConfig, seed_override: Option<u64>) -> Result<()> {
    let scn = config
        .simulate
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("config has no 'simulate' section".into()))?;
    let out = &config.paths.output_dir;
    std::fs::create_dir_all(out)?;
    let sim = simulate::simulate(scn, seed_override)?;

    formats::write_sites(&out.join("sites.csv"), &sim.sites)?;
    formats::write_observations(&out.join("observations.csv"), &sim.table)?;
    formats::write_truth(&out.join("truth.csv"), &sim.truth)?;
    if let Some(net) = &sim.network {
        formats::write_network(&out.join("network.json"), net.segments())?;
    }
    std::fs::write(
        out.join("truth_params.json"),
        serde_json::to_string_pretty(&sim.true_params).unwrap(),
    )?;

    // Block sites become the prediction file, with their covariates.
    if !sim.block_site_ids.is_empty() {
        let pred_sites: Vec<Site> = sim
            .sites
            .iter()
            .filter(|s| sim.block_site_ids.contains(&s.site_id))
            .cloned()
            .collect();
        let idx: Vec<usize> = pred_sites
            .iter()
            .map(|s| sim.table.site_ids.iter().position(|&v| v == s.site_id).unwrap())
            .collect();
        let pred_cov = CovariateTable {
            names: sim.table.covariates.names.clone(),
            values: sim
                .table
                .covariates
                .values
                .iter()
                .map(|m| {
                    DMatrix::from_fn(pred_sites.len(), sim.table.time_values.len(), |p, t| {
                        m[(idx[p], t)]
                    })
                })
                .collect(),
        };
        formats::write_prediction_sites(
            &out.join("prediction_sites.csv"),
            &PredictionTable {
                sites: pred_sites,
                time_values: sim.table.time_values.clone(),
                covariates: pred_cov,
            },
        )?;
    }
    println!(
        "simulated {} sites x {} times -> {} ({} held-out cells, {} block sites)",
        sim.table.site_ids.len(),
        sim.table.time_values.len(),
        out.display(),
        sim.truth.len(),
        sim.block_site_ids.len()
    );
    Ok(())
}

/// `fit` subcommand: run the sampler and persist draws + diagnostics.
pub fn cmd_fit(config: &RunConfig, config_hash: &str, seed_override: Option<u64>) -> Result<()> {
    let out = &config.paths.output_dir;
    std::fs::create_dir_all(out)?;
    let (table, sites, segments) = load_inputs(config)?;
    let asm = assemble(config, table, sites, segments)?;

    let mut mcmc = config.mcmc.build(Some(out.clone()));
    if let Some(seed) = seed_override {
        mcmc.seed = seed;
    }
    let problem = FitProblem::new(&asm.panel, &asm.bundle, &asm.structure, &asm.priors)?;
    let draws = run_mcmc(&problem, &mcmc, None)?;

    formats::write_draws(out, &draws)?;
    let manifest = Manifest {
        seed: mcmc.seed,
        config_hash: config_hash.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        chains: draws.chains.len(),
        draws_per_chain: draws.n_draws_per_chain(),
        param_names: draws.param_names.clone(),
        missing_cells: draws
            .missing_cells
            .iter()
            .map(|&(si, t)| (asm.panel.site_ids[si], t))
            .collect(),
        time_values: asm.panel.time_values.clone(),
        site_ids: asm.panel.site_ids.clone(),
        x_names: asm.panel.x_names.clone(),
        design_transforms: asm.design.transforms.clone(),
        phi_transforms: asm.phi_transforms.clone(),
        phi_covariate_names: asm.phi_covariate_names.clone(),
    };
    formats::write_manifest(&out.join("manifest.json"), &manifest)?;
    if !asm.holdout_rows.is_empty() {
        formats::write_truth(&out.join("holdout.csv"), &asm.holdout_rows)?;
    }

    let diag = draws.diagnostics();
    match diag {
        Ok(rows) => {
            tables::write_diagnostics_json(&out.join("diagnostics.json"), &rows, &draws)?;
            let worst_rhat = rows.iter().map(|r| r.rhat).fold(0.0, f64::max);
            println!(
                "fit complete: {} chains x {} draws; worst R-hat {:.3}",
                draws.chains.len(),
                draws.n_draws_per_chain(),
                worst_rhat
            );
        }
        Err(Error::InsufficientDraws { .. }) => {
            println!(
                "fit complete: {} chain(s) x {} draws (diagnostics need >= 2 chains)",
                draws.chains.len(),
                draws.n_draws_per_chain()
            );
        }
        Err(e) => return Err(e),
    }
    tables::write_posterior_histograms(&out.join("posterior_hist.csv"), &draws)?;
    Ok(())
}

/// Rebuild fit-time state (panel, structure, draws) from the output dir.
pub fn reload_fit(config: &RunConfig) -> Result<(Assembled, PosteriorDraws, Manifest)> {
    let out = &config.paths.output_dir;
    let manifest = formats::read_manifest(&out.join("manifest.json"))?;
    let (table, sites, segments) = load_inputs(config)?;
    let asm = assemble(config, table, sites, segments)?;
    // The holdout mask is deterministic, so the rebuilt missing set must
    // match the manifest exactly.
    let rebuilt: Vec<(i64, usize)> = asm
        .panel
        .missing_cells()
        .iter()
        .map(|&(si, t)| (asm.panel.site_ids[si], t))
        .collect();
    if rebuilt != manifest.missing_cells {
        return Err(Error::ConfigInvalid(
            "missing-cell pattern no longer matches the manifest; holdout config or data changed since the fit".into(),
        ));
    }
    let draws = formats::read_draws(out, &manifest)?;
    Ok((asm, draws, manifest))
}

fn layout_for(asm: &Assembled) -> crate::model::ParamLayout {
    crate::model::ParamLayout::new(
        asm.panel.n_beta(),
        asm.priors.alpha_max.clone(),
        asm.structure.temporal.clone(),
        asm.panel.n_sites(),
    )
}

/// `predict` subcommand: simple kriging at the prediction sites.
pub fn cmd_predict(config: &RunConfig) -> Result<()> {
    let out = &config.paths.output_dir;
    let (asm, draws, manifest) = reload_fit(config)?;
    let pred_path = config
        .paths
        .prediction_sites
        .as_ref()
        .ok_or_else(|| Error::ConfigInvalid("paths.prediction_sites is required".into()))?;
    let pred_table = formats::read_prediction_sites(pred_path)?;
    if pred_table.time_values != asm.panel.time_values {
        return Err(Error::ConfigInvalid(
            "prediction file time values do not match the fitted panel".into(),
        ));
    }

    // Design at prediction sites with the fit's recorded transforms.
    let design = Design {
        x: vec![],
        names: manifest.x_names.clone(),
        transforms: manifest.design_transforms.clone(),
    };
    let x = crate::model::apply_design(
        &design,
        &asm.formula,
        &pred_table.covariates,
        pred_table.sites.len(),
        &pred_table.time_values,
    )?;

    let phi_covariates = if asm.phi_covariate_names.is_empty() {
        None
    } else {
        let mut m = DMatrix::zeros(pred_table.sites.len(), asm.phi_covariate_names.len());
        for (j, name) in asm.phi_covariate_names.iter().enumerate() {
            let col = pred_table.covariates.column(name)?;
            let (mean, sd) = manifest.phi_transforms[j];
            for p in 0..pred_table.sites.len() {
                m[(p, j)] = (col[(p, 0)] - mean) / sd;
            }
        }
        Some(m)
    };

    let geom = predictor::build_geometry(
        &asm.panel,
        &asm.panel_sites,
        asm.network.as_ref(),
        &pred_table.sites,
    )?;
    let task = PredictionTask {
        sites: pred_table.sites.clone(),
        x,
        phi_covariates,
        draw_subsample: config.prediction.draw_subsample,
        batch_size: config.prediction.batch_size,
        thresholds: config.prediction.thresholds.clone(),
        hdi_mass: config.prediction.hdi_mass,
        seed: config.prediction.seed,
    };
    let layout = layout_for(&asm);
    let result = if config.prediction.use_recursion {
        predictor::krige_var_recursion(&draws, &layout, &asm.structure, &asm.panel, &geom, &task)?
    } else {
        predictor::krige(&draws, &layout, &asm.structure, &asm.panel, &geom, &task)?
    };

    tables::write_predictions(&out.join("predictions.csv"), &result, &task)?;
    tables::write_exceedance(&out.join("exceedance.csv"), &result, &task)?;
    tables::write_proportion_above(&out.join("proportion_above.csv"), &result, &task)?;
    println!(
        "predicted {} sites x {} times from {} draws -> {}",
        result.site_ids.len(),
        result.time_values.len(),
        result.draws_used,
        out.display()
    );
    Ok(())
}

/// Truth source for evaluation: simulated latent truth when available,
/// observed held-out values otherwise.
fn read_eval_truth(config: &RunConfig) -> Result<Vec<TruthRow>> {
    if let Some(obs) = &config.paths.observations {
        let sibling = obs.parent().unwrap_or_else(|| Path::new(".")).join("truth.csv");
        if sibling.exists() {
            return formats::read_truth(&sibling);
        }
    }
    let holdout = config.paths.output_dir.join("holdout.csv");
    if holdout.exists() {
        return formats::read_truth(&holdout);
    }
    Err(Error::EmptyHoldout)
}

/// `evaluate` subcommand: metrics against held-out truth.
pub fn cmd_evaluate(config: &RunConfig) -> Result<PathBuf> {
    let out = &config.paths.output_dir;
    let (_asm, draws, manifest) = reload_fit(config)?;
    let truth = read_eval_truth(config)?;
    if truth.is_empty() {
        return Err(Error::EmptyHoldout);
    }

    // Column of each truth cell in the imputed-draw matrix.
    let cells: Vec<(i64, usize)> = manifest.missing_cells.clone();
    let imputed = draws.stacked_imputed();
    let mut cols = Vec::with_capacity(truth.len());
    for row in &truth {
        let col = cells
            .iter()
            .position(|&(sid, t)| sid == row.site_id && t == row.t_index)
            .ok_or_else(|| {
                Error::ConfigInvalid(format!(
                    "truth cell (site {}, t {}) was not imputed by the fit",
                    row.site_id, row.t_index
                ))
            })?;
        cols.push(col);
    }

    let y_true: Vec<f64> = truth.iter().map(|r| r.y_true).collect();
    let pred_mean: Vec<f64> = cols
        .iter()
        .map(|&c| imputed.column(c).sum() / imputed.nrows() as f64)
        .collect();
    let rmspe_all = rmspe(&pred_mean, &y_true)?;

    // Block-site subset (kriging targets) when present.
    let block_idx: Vec<usize> = truth
        .iter()
        .enumerate()
        .filter(|(_, r)| r.block)
        .map(|(i, _)| i)
        .collect();
    let rmspe_block = if block_idx.is_empty() {
        None
    } else {
        Some(rmspe(
            &block_idx.iter().map(|&i| pred_mean[i]).collect::<Vec<_>>(),
            &block_idx.iter().map(|&i| y_true[i]).collect::<Vec<_>>(),
        )?)
    };

    // Kriging RMSPE: join predictions.csv on (site_id, t_index).
    let pred_path = out.join("predictions.csv");
    let rmspe_kriging = if pred_path.exists() {
        let rows = tables::read_predictions(&pred_path)?;
        let mut pred = Vec::new();
        let mut tru = Vec::new();
        for r in &truth {
            if let Some(p) = rows
                .iter()
                .find(|p| p.site_id == r.site_id && p.t_index == r.t_index)
            {
                pred.push(p.mean);
                tru.push(r.y_true);
            }
        }
        if pred.is_empty() {
            None
        } else {
            Some(rmspe(&pred, &tru)?)
        }
    } else {
        None
    };

    // CRPS over imputation draws.
    let draw_cols = DMatrix::from_fn(imputed.nrows(), cols.len(), |r, k| imputed[(r, cols[k])]);
    let crps = crps_sample(&draw_cols, &y_true)?;

    // 95% HDI coverage with the exact binomial categories.
    let intervals: Result<Vec<(f64, f64)>> = cols
        .iter()
        .map(|&c| {
            let v: Vec<f64> = imputed.column(c).iter().copied().collect();
            hdi(&v, 0.95)
        })
        .collect();
    let intervals = intervals?;
    let (cover, p_value, category) = coverage(&intervals, &y_true, 0.95)?;

    let w = waic(&draws.stacked_pointwise())?;

    // SE rank over the fixed effects.
    let beta_names: Vec<String> = draws
        .param_names
        .iter()
        .filter(|n| n.starts_with("beta["))
        .cloned()
        .collect();
    let chains_by_effect: Vec<Vec<Vec<f64>>> = beta_names
        .iter()
        .map(|n| {
            let idx = draws.param_names.iter().position(|p| p == n).unwrap();
            draws.chains_of(idx)
        })
        .collect();
    let (se_rank, _) = mcse_rank(&chains_by_effect, &beta_names)?;

    let report = EvaluationReport {
        rmspe: rmspe_all,
        crps_mean: crps,
        coverage: cover,
        coverage_p_value: p_value,
        coverage_category: category,
        waic: w.waic,
        lppd: w.lppd,
        p_waic: w.p_waic,
        se_rank,
    };
    let mut body = serde_json::to_value(&report).unwrap();
    if let Some(b) = rmspe_block {
        body["rmspe_block"] = serde_json::json!(b);
    }
    if let Some(k) = rmspe_kriging {
        body["rmspe_kriging"] = serde_json::json!(k);
    }
    let path = out.join("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap())?;

    tables::write_pred_vs_observed(
        &out.join("pred_vs_observed.csv"),
        &truth,
        &pred_mean,
        &intervals,
    )?;
    println!(
        "evaluate: rmspe {:.4}{} crps {:.4} coverage {:.3} ({:?}) waic {:.1}",
        rmspe_all,
        rmspe_kriging
            .map(|k| format!(" (kriging {k:.4})"))
            .unwrap_or_default(),
        crps,
        cover,
        category,
        w.waic
    );
    Ok(path)
}

/// `diagnose` subcommand: print the per-parameter convergence table.
pub fn cmd_diagnose(config: &RunConfig) -> Result<()> {
    let (_, draws, _) = reload_fit(config)?;
    let rows = draws.diagnostics()?;
    println!(
        "{:<24} {:>10} {:>10} {:>8} {:>10} {:>10}",
        "parameter", "mean", "sd", "rhat", "ess_bulk", "mcse"
    );
    for r in &rows {
        println!(
            "{:<24} {:>10.4} {:>10.4} {:>8.3} {:>10.1} {:>10.5}",
            r.name, r.mean, r.sd, r.rhat, r.ess_bulk, r.mcse
        );
    }
    for (k, chain) in draws.chains.iter().enumerate() {
        if !chain.accept_rate.is_empty() {
            println!("chain {k} acceptance: {:?}", chain.accept_rate);
        }
    }
    Ok(())
}

/// Convenience used by tests and the acceptance suite: fit + predict +
/// evaluate in memory for an already-simulated scenario.
pub struct ReplicateOutcome {
    /// Posterior-mean imputation RMSPE over every held-out cell.
    pub rmspe_imputation_all: f64,
    /// Same, restricted to the block-site cells (the kriging targets).
    pub rmspe_imputation_block: f64,
    /// Two-stage kriging at the block sites, separable route (method 1).
    pub rmspe_kriging_m1: f64,
    /// Two-stage kriging at the block sites, VAR recursion (method 2).
    pub rmspe_kriging_m2: f64,
    pub draws: PosteriorDraws,
}

pub fn run_replicate(
    sim: &simulate::Simulated,
    components: Vec<SpatialComponent>,
    temporal: TemporalSpec,
    mcmc: &crate::sampler::McmcConfig,
    draw_subsample: usize,
) -> Result<ReplicateOutcome> {
    let formula = Formula {
        terms: sim
            .table
            .covariates
            .names
            .iter()
            .map(|n| crate::model::Term::Column(n.clone()))
            .collect(),
        standardize: false,
    };
    let design = build_design(
        &sim.table.covariates,
        &formula,
        sim.table.site_ids.len(),
        &sim.table.time_values,
    )?;
    let panel = ObservationPanel::new(
        sim.table.y.clone(),
        sim.table.observed.clone(),
        design.x.clone(),
        sim.table.site_ids.clone(),
        sim.table.time_values.clone(),
        design.names.clone(),
    )?;
    let bundle = match &sim.network {
        Some(net) => net.distance_bundle()?,
        None => DistanceBundle::from_coordinates(&sim.sites),
    };
    let structure = ModelStructure::new(
        components,
        temporal,
        PhiContext::default(),
        LikelihoodMethod::VarRecursion,
    );
    let priors =
        crate::model::PriorConfig::defaults(&structure.components, &structure.temporal, &bundle)?;
    let problem = FitProblem::new(&panel, &bundle, &structure, &priors)?;
    let draws = run_mcmc(&problem, mcmc, None)?;

    // Imputation RMSPE over all held-out cells and over block cells alone.
    let imputed = draws.stacked_imputed();
    let cells = draws.missing_cells.clone();
    let mut pred_all = Vec::new();
    let mut tru_all = Vec::new();
    let mut pred_block = Vec::new();
    let mut tru_block = Vec::new();
    for row in &sim.truth {
        let si = panel.site_ids.iter().position(|&v| v == row.site_id).unwrap();
        let col = cells
            .iter()
            .position(|&(s, t)| s == si && t == row.t_index)
            .expect("truth cell must be missing in the panel");
        let m = imputed.column(col).sum() / imputed.nrows() as f64;
        pred_all.push(m);
        tru_all.push(row.y_true);
        if row.block {
            pred_block.push(m);
            tru_block.push(row.y_true);
        }
    }
    let rmspe_imputation_all = rmspe(&pred_all, &tru_all)?;
    let rmspe_imputation_block = if pred_block.is_empty() {
        f64::NAN
    } else {
        rmspe(&pred_block, &tru_block)?
    };

    // Two-stage kriging at the block sites, both routes.
    let block_sites: Vec<Site> = sim
        .sites
        .iter()
        .filter(|s| sim.block_site_ids.contains(&s.site_id))
        .cloned()
        .collect();
    let (rmspe_kriging_m1, rmspe_kriging_m2) = if block_sites.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        let idx: Vec<usize> = block_sites
            .iter()
            .map(|s| panel.site_ids.iter().position(|&v| v == s.site_id).unwrap())
            .collect();
        let x: Vec<DMatrix<f64>> = (0..panel.n_times())
            .map(|t| {
                DMatrix::from_fn(block_sites.len(), panel.n_beta(), |p, k| {
                    panel.x[t][(idx[p], k)]
                })
            })
            .collect();
        let geom = predictor::build_geometry(&panel, &sim.sites, sim.network.as_ref(), &block_sites)?;
        let mut task = PredictionTask::defaults(block_sites.clone(), x);
        task.draw_subsample = draw_subsample;
        let layout = layout_for_parts(&panel, &priors, &structure);
        let score = |result: &crate::predictor::PredictionResult| -> Result<f64> {
            let mut pred = Vec::new();
            let mut tru = Vec::new();
            for row in sim.truth.iter().filter(|r| r.block) {
                let p = result.site_ids.iter().position(|&v| v == row.site_id).unwrap();
                pred.push(result.mean[(p, row.t_index)]);
                tru.push(row.y_true);
            }
            rmspe(&pred, &tru)
        };
        let m1 = predictor::krige(&draws, &layout, &structure, &panel, &geom, &task)?;
        let m2 = predictor::krige_var_recursion(&draws, &layout, &structure, &panel, &geom, &task)?;
        (score(&m1)?, score(&m2)?)
    };
    Ok(ReplicateOutcome {
        rmspe_imputation_all,
        rmspe_imputation_block,
        rmspe_kriging_m1,
        rmspe_kriging_m2,
        draws,
    })
}

fn layout_for_parts(
    panel: &ObservationPanel,
    priors: &crate::model::PriorConfig,
    structure: &ModelStructure,
) -> crate::model::ParamLayout {
    crate::model::ParamLayout::new(
        panel.n_beta(),
        priors.alpha_max.clone(),
        structure.temporal.clone(),
        panel.n_sites(),
    )
}

/// GLS-style posterior summary helper for recovery checks: the central
/// credible interval of one named parameter from stacked draws.
pub fn central_interval(draws: &PosteriorDraws, name: &str, mass: f64) -> Result<(f64, f64)> {
    let idx = draws
        .param_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
    let stacked = draws.stacked_params();
    let mut v: Vec<f64> = stacked.column(idx).iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let lo = ((1.0 - mass) / 2.0 * (n - 1) as f64).round() as usize;
    let hi = ((1.0 - (1.0 - mass) / 2.0) * (n - 1) as f64).round() as usize;
    Ok((v[lo], v[hi]))
}

/// Posterior mean of one named parameter.
pub fn posterior_mean(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    let idx = draws
        .param_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
    let stacked = draws.stacked_params();
    Ok(stacked.column(idx).sum() / stacked.nrows() as f64)
}

