//! Scenario simulation: topology, covariates, the spatio-temporal response
//! drawn exactly from the model equations, and the missingness plan.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernels::{assert_psd, cov_mixture, JitterPolicy};
use crate::model::CovariateTable;
use crate::network::{DistanceBundle, Segment, Site, StreamNetwork, Weighting};
use crate::temporal::{build_phi, neighbor_info, PhiContext};

use super::config::{ScenarioConfig, TemporalConfig, TopologyConfig};
use super::formats::{ObservationTable, TruthRow};

/// Everything a simulation produces: the observation table (with cells
/// masked per the plan), the latent truth, the topology, and the block
/// sites as a prediction table.
pub struct Simulated {
    pub table: ObservationTable,
    pub truth: Vec<TruthRow>,
    pub network: Option<StreamNetwork>,
    pub sites: Vec<Site>,
    pub block_site_ids: Vec<i64>,
    pub true_params: serde_json::Value,
}

/// Uniform-attachment random tree: parent of segment i is uniform over the
/// existing segments, lengths U(500, 5000) m, contributing areas
/// LogNormal(2, 0.5) km², one site per segment at a uniform position.
pub fn random_tree(n: usize, seed: u64) -> Result<(StreamNetwork, Vec<Site>)> {
    if n == 0 {
        return Err(Error::ConfigInvalid("random tree needs n >= 1 segments".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut segments: Vec<Segment> = Vec::with_capacity(n);
    for i in 0..n {
        let parent_id = if i == 0 { None } else { Some(rng.gen_range(0..i) as i64) };
        let length = rng.gen_range(500.0..5000.0);
        let z: f64 = rng.sample(StandardNormal);
        let contrib = (2.0 + 0.5 * z).exp();
        segments.push(Segment {
            id: i as i64,
            parent_id,
            length,
            seg_contrib_area: contrib,
            watershed_area: 0.0,
        });
    }
    // Watershed area accumulates the upstream subtree (children have larger
    // indices by construction).
    for i in (0..n).rev() {
        let mut total = segments[i].seg_contrib_area;
        for j in (i + 1)..n {
            if segments[j].parent_id == Some(segments[i].id) {
                total += segments[j].watershed_area;
            }
        }
        segments[i].watershed_area = total;
    }
    // Downstream-end updists by walking parents.
    let down_of = |id: i64, segs: &[Segment]| -> f64 {
        let mut d = 0.0;
        let mut cur = segs.iter().find(|s| s.id == id).unwrap();
        while let Some(pid) = cur.parent_id {
            cur = segs.iter().find(|s| s.id == pid).unwrap();
            d += cur.length;
        }
        d
    };
    let sites: Vec<Site> = (0..n)
        .map(|i| {
            let off: f64 = rng.gen_range(0.0..segments[i].length);
            Site {
                site_id: i as i64,
                segment_id: i as i64,
                updist: down_of(i as i64, &segments) + off,
                x: rng.gen_range(0.0..10_000.0),
                y: rng.gen_range(0.0..10_000.0),
            }
        })
        .collect();
    let mut net = StreamNetwork::build(segments, sites.clone())?;
    net.compute_afv(&Weighting::WatershedArea)?;
    Ok((net, sites))
}

/// Regular ⌈√n⌉×⌈√n⌉ grid on the unit square (first n points), sites only.
pub fn grid_euclidean(n: usize) -> Vec<Site> {
    let side = (n as f64).sqrt().ceil() as usize;
    let step = if side > 1 { 1.0 / (side as f64 - 1.0) } else { 0.0 };
    (0..n)
        .map(|k| Site {
            site_id: k as i64,
            segment_id: 0,
            updist: 0.0,
            x: (k % side) as f64 * step,
            y: (k / side) as f64 * step,
        })
        .collect()
}

/// True Φ for the scenario's temporal configuration.
fn scenario_phi(
    cfg: &TemporalConfig,
    sites: &[Site],
    covariates: &CovariateTable,
    bundle: &DistanceBundle,
) -> Result<(DMatrix<f64>, serde_json::Value)> {
    let n_sites = sites.len();
    let spec = cfg.spec();
    let (params, detail): (Vec<f64>, serde_json::Value) = match cfg {
        TemporalConfig::Ar { phi } => {
            let p = phi.ok_or_else(|| Error::ConfigInvalid("scenario needs temporal.phi".into()))?;
            (vec![p], serde_json::json!({ "phi": p }))
        }
        TemporalConfig::VarSitewise { phi, .. } => {
            let p = phi
                .clone()
                .ok_or_else(|| Error::ConfigInvalid("scenario needs temporal.phi list".into()))?;
            if p.len() != n_sites {
                return Err(Error::DimensionMismatch(format!(
                    "temporal.phi has {} entries for {} sites",
                    p.len(),
                    n_sites
                )));
            }
            (p.clone(), serde_json::json!({ "phi": p }))
        }
        TemporalConfig::VarCovariate { gamma, covariates: names, .. } => {
            let g = gamma
                .clone()
                .ok_or_else(|| Error::ConfigInvalid("scenario needs temporal.gamma".into()))?;
            if g.len() != names.len() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "temporal.gamma has {} entries for {} covariates + intercept",
                    g.len(),
                    names.len()
                )));
            }
            (g.clone(), serde_json::json!({ "gamma": g }))
        }
        TemporalConfig::Var2nn { diag, offdiag, .. } => {
            let d = diag.ok_or_else(|| Error::ConfigInvalid("scenario needs temporal.diag".into()))?;
            let o = offdiag.unwrap_or(0.0);
            let mut p = vec![d; n_sites];
            p.extend(std::iter::repeat(o).take(2 * n_sites));
            (p, serde_json::json!({ "diag": d, "offdiag": o }))
        }
    };
    let ctx = scenario_phi_context(cfg, sites, covariates, bundle)?;
    let phi = build_phi(&spec, &params, n_sites, &ctx)?;
    Ok((phi, detail))
}

/// Context for building Φ in a scenario: raw site covariates taken at the
/// first time slice, neighbour sets from total hydrologic distance with
/// upstream meaning flow-connected and farther from the outlet.
pub fn scenario_phi_context(
    cfg: &TemporalConfig,
    sites: &[Site],
    covariates: &CovariateTable,
    bundle: &DistanceBundle,
) -> Result<PhiContext> {
    let n_sites = sites.len();
    match cfg {
        TemporalConfig::VarCovariate { covariates: names, .. } => {
            let mut x = DMatrix::zeros(n_sites, names.len());
            for (j, name) in names.iter().enumerate() {
                let col = covariates.column(name)?;
                for s in 0..n_sites {
                    x[(s, j)] = col[(s, 0)];
                }
            }
            Ok(PhiContext { site_covariates: Some(x), neighbors: None })
        }
        TemporalConfig::Var2nn { .. } => {
            let info = neighbor_info(&bundle.h, &bundle.site_ids, |i, j| {
                bundle.flow_conn[(i, j)] && sites[j].updist > sites[i].updist
            })?;
            Ok(PhiContext { site_covariates: None, neighbors: Some(info) })
        }
        _ => Ok(PhiContext::default()),
    }
}

/// Simulate a scenario end to end. Returns the masked observation table and
/// the full latent truth.
pub fn simulate(scn: &ScenarioConfig, seed_override: Option<u64>) -> Result<Simulated> {
    let seed = seed_override.unwrap_or(scn.seed);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(0xD5);

    let (network, mut sites) = match &scn.topology {
        TopologyConfig::RandomTree { n, seed } => {
            let (net, sites) = random_tree(*n, *seed)?;
            (Some(net), sites)
        }
        TopologyConfig::GridEuclidean { n } => (None, grid_euclidean(*n)),
        TopologyConfig::File => {
            return Err(Error::ConfigInvalid(
                "scenario topology 'file' requires simulating from loaded inputs; point paths.network/sites at existing files and use them directly".into(),
            ))
        }
    };
    let network = if scn.coordinate_scale != 1.0 {
        if !(scn.coordinate_scale > 0.0) {
            return Err(Error::ConfigInvalid("coordinate_scale must be > 0".into()));
        }
        for s in &mut sites {
            s.x *= scn.coordinate_scale;
            s.y *= scn.coordinate_scale;
        }
        match network {
            Some(net) => Some(net.with_sites(sites.clone())?),
            None => None,
        }
    } else {
        network
    };
    let s = sites.len();
    let t_len = scn.t;
    if t_len < 2 {
        return Err(Error::ConfigInvalid("scenario needs t >= 2".into()));
    }
    let bundle = match &network {
        Some(net) => net.distance_bundle()?,
        None => DistanceBundle::from_coordinates(&sites),
    };

    // Covariates: iid standard normals per cell, named x1..xk.
    let names: Vec<String> = (1..=scn.n_covariates).map(|k| format!("x{k}")).collect();
    let values: Vec<DMatrix<f64>> = (0..scn.n_covariates)
        .map(|_| DMatrix::from_fn(s, t_len, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let covariates = CovariateTable { names: names.clone(), values };

    if scn.beta.len() != scn.n_covariates + 1 {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries for intercept + {} covariates",
            scn.beta.len(),
            scn.n_covariates
        )));
    }

    // Spatial innovation covariance V = Σ + σ₀²I.
    let comps: Result<Vec<_>> = scn.components.iter().map(|c| c.build()).collect();
    let comps = comps?;
    let mut v = cov_mixture(&comps, &bundle)?;
    for i in 0..s {
        v[(i, i)] += scn.nugget_sd * scn.nugget_sd;
    }
    let factor = assert_psd(&v, &JitterPolicy::default())?;

    let (phi, phi_detail) = scenario_phi(&scn.temporal, &sites, &covariates, &bundle)?;
    let scalar_phi = match &scn.temporal {
        TemporalConfig::Ar { phi } => *phi,
        _ => None,
    };

    // y_t = X_t β + e_t with e_t = Φ e_{t-1} + η_t, η ~ N(0, V); the
    // scalar-φ case starts from the stationary covariance V/(1-φ²).
    let beta = DVector::from_row_slice(&scn.beta);
    let mut x_slices: Vec<DMatrix<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        x_slices.push(DMatrix::from_fn(s, scn.beta.len(), |i, k| {
            if k == 0 {
                1.0
            } else {
                covariates.values[k - 1][(i, t)]
            }
        }));
    }
    let gauss_vec = |rng: &mut ChaCha20Rng| {
        DVector::from_fn(s, |_, _| rng.sample::<f64, _>(StandardNormal))
    };
    let mut e = factor.l_mul(&gauss_vec(&mut rng));
    if let Some(p) = scalar_phi {
        e /= (1.0 - p * p).sqrt();
    }
    let mut y = DMatrix::zeros(s, t_len);
    for t in 0..t_len {
        if t > 0 {
            e = &phi * &e + factor.l_mul(&gauss_vec(&mut rng));
        }
        let mu = &x_slices[t] * &beta;
        for i in 0..s {
            y[(i, t)] = mu[i] + e[i];
        }
    }

    // Missingness plan: block sites first, then random cells elsewhere.
    let mut mrng = ChaCha20Rng::seed_from_u64(scn.missing.seed ^ seed.rotate_left(17));
    let mut block = vec![false; s];
    if scn.missing.block_sites > 0 {
        if scn.missing.block_sites >= s {
            return Err(Error::ConfigInvalid("block_sites must be < number of sites".into()));
        }
        let picks = rand::seq::index::sample(&mut mrng, s, scn.missing.block_sites);
        for i in picks {
            block[i] = true;
        }
    }
    let mut observed = DMatrix::from_element(s, t_len, true);
    for i in 0..s {
        for t in 0..t_len {
            if block[i] || (scn.missing.random_p > 0.0 && mrng.gen::<f64>() < scn.missing.random_p) {
                observed[(i, t)] = false;
            }
        }
    }

    let site_ids: Vec<i64> = sites.iter().map(|x| x.site_id).collect();
    let time_values: Vec<f64> = (1..=t_len).map(|t| t as f64).collect();
    let mut truth = Vec::new();
    for (si, &sid) in site_ids.iter().enumerate() {
        for t in 0..t_len {
            if !observed[(si, t)] {
                truth.push(TruthRow {
                    site_id: sid,
                    t_index: t,
                    t_value: time_values[t],
                    y_true: y[(si, t)],
                    block: block[si],
                });
            }
        }
    }
    let block_site_ids: Vec<i64> = site_ids
        .iter()
        .enumerate()
        .filter(|&(i, _)| block[i])
        .map(|(_, &id)| id)
        .collect();

    let true_params = serde_json::json!({
        "beta": scn.beta,
        "nugget_sd": scn.nugget_sd,
        "components": scn.components.iter().map(|c| serde_json::json!({
            "family": c.family, "form": c.form, "sigma2": c.sigma2, "alpha": c.alpha,
        })).collect::<Vec<_>>(),
        "temporal": phi_detail,
        "seed": seed,
    });

    Ok(Simulated {
        table: ObservationTable {
            site_ids,
            time_values,
            y,
            observed,
            covariates,
        },
        truth,
        network,
        sites,
        block_site_ids,
        true_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workbench::config::{ComponentConfig, MissingnessConfig};

    fn euclid_scenario(n: usize, t: usize, nugget: f64, phi: f64) -> ScenarioConfig {
        ScenarioConfig {
            topology: TopologyConfig::GridEuclidean { n },
            components: vec![ComponentConfig {
                family: "euclidean".into(),
                form: "exponential".into(),
                sigma2: 1.0,
                alpha: 1.0,
            }],
            temporal: TemporalConfig::Ar { phi: Some(phi) },
            beta: vec![-1.0, 2.0],
            nugget_sd: nugget,
            n_covariates: 1,
            coordinate_scale: 1.0,
            t,
            missing: MissingnessConfig::default(),
            seed: 11,
        }
    }

    #[test]
    fn noiseless_limit_reduces_to_fixed_effects() {
        let mut scn = euclid_scenario(9, 4, 0.0, 0.0);
        scn.components[0].sigma2 = 1e-30;
        let sim = simulate(&scn, None).unwrap();
        for t in 0..4 {
            for i in 0..9 {
                let mu = -1.0 + 2.0 * sim.table.covariates.values[0][(i, t)];
                assert!((sim.table.y[(i, t)] - mu).abs() < 1e-10);
            }
        }
    }

    /// Monte Carlo moment oracle: with Φ = 0 the slices are iid with
    /// covariance Σ + σ₀²I; the sample covariance over many slices must
    /// match entrywise within 3 MC standard errors.
    #[test]
    fn slice_moments_match_innovation_covariance() {
        let n = 4;
        let t = 100_000;
        let scn = euclid_scenario(n, t, 0.5, 0.0);
        let sim = simulate(&scn, Some(7)).unwrap();
        // Recompute the expected V.
        let sites = grid_euclidean(n);
        let bundle = DistanceBundle::from_coordinates(&sites);
        let comps: Vec<_> = scn.components.iter().map(|c| c.build().unwrap()).collect();
        let mut v = cov_mixture(&comps, &bundle).unwrap();
        for i in 0..n {
            v[(i, i)] += 0.25;
        }
        // Residuals against the true mean.
        let mut resid = DMatrix::zeros(n, t);
        for tt in 0..t {
            for i in 0..n {
                let mu = -1.0 + 2.0 * sim.table.covariates.values[0][(i, tt)];
                resid[(i, tt)] = sim.table.y[(i, tt)] - mu;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for tt in 0..t {
                    acc += resid[(i, tt)] * resid[(j, tt)];
                }
                let est = acc / t as f64;
                // var of a covariance moment estimate: (v_ii v_jj + v_ij²)/t
                let se = ((v[(i, i)] * v[(j, j)] + v[(i, j)] * v[(i, j)]) / t as f64).sqrt();
                assert!(
                    (est - v[(i, j)]).abs() < 3.0 * se,
                    "cov({i},{j}): {est} vs {} (se {se})",
                    v[(i, j)]
                );
            }
        }
    }

    #[test]
    fn missingness_plan_marks_blocks_and_cells() {
        let mut scn = euclid_scenario(16, 6, 0.2, 0.5);
        scn.missing = MissingnessConfig { random_p: 0.2, block_sites: 3, seed: 4 };
        let sim = simulate(&scn, Some(3)).unwrap();
        assert_eq!(sim.block_site_ids.len(), 3);
        for &sid in &sim.block_site_ids {
            let si = sim.table.site_ids.iter().position(|&v| v == sid).unwrap();
            for t in 0..6 {
                assert!(!sim.table.observed[(si, t)]);
            }
        }
        // truth rows cover exactly the missing cells
        let missing_count = sim.table.observed.iter().filter(|&&o| !o).count();
        assert_eq!(sim.truth.len(), missing_count);
    }

    #[test]
    fn random_tree_is_valid_and_deterministic() {
        let (net, sites) = random_tree(12, 99).unwrap();
        assert_eq!(net.segments().len(), 12);
        assert_eq!(sites.len(), 12);
        assert!(net.afv().is_some());
        let (net2, sites2) = random_tree(12, 99).unwrap();
        assert_eq!(
            net.segments().iter().map(|s| s.length).collect::<Vec<_>>(),
            net2.segments().iter().map(|s| s.length).collect::<Vec<_>>()
        );
        assert_eq!(sites[3].updist, sites2[3].updist);
        // lengths within the stated range
        for s in net.segments() {
            assert!((500.0..5000.0).contains(&s.length));
        }
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let scn = euclid_scenario(9, 5, 0.3, 0.6);
        let a = simulate(&scn, Some(42)).unwrap();
        let b = simulate(&scn, Some(42)).unwrap();
        assert_eq!(a.table.y, b.table.y);
        assert_eq!(a.table.observed, b.table.observed);
    }

    /// Simulator/likelihood consistency: the generating parameters must
    /// outscore random prior draws on the simulated data.
    #[test]
    fn truth_outscores_random_prior_draws() {
        use crate::kernels::{EuclidForm, SpatialComponent};
        use crate::model::likelihood::{loglik_var, LikelihoodMethod, ModelStructure};
        use crate::model::params::{ParamVector, TemporalParams};
        use crate::temporal::TemporalSpec;

        let scn = euclid_scenario(16, 10, 0.3, 0.6);
        let sim = simulate(&scn, Some(5)).unwrap();
        let sites = grid_euclidean(16);
        let bundle = DistanceBundle::from_coordinates(&sites);
        let structure = ModelStructure::new(
            vec![SpatialComponent::Euclidean { form: EuclidForm::Exponential, sigma2: 1.0, alpha: 1.0 }],
            TemporalSpec::Ar,
            PhiContext::default(),
            LikelihoodMethod::VarRecursion,
        );
        let x: Vec<DMatrix<f64>> = (0..10)
            .map(|t| {
                DMatrix::from_fn(16, 2, |i, k| {
                    if k == 0 { 1.0 } else { sim.table.covariates.values[0][(i, t)] }
                })
            })
            .collect();
        let truth = ParamVector {
            beta: DVector::from_row_slice(&[-1.0, 2.0]),
            sigma0: 0.3,
            sigma: vec![1.0],
            alpha: vec![1.0],
            temporal: TemporalParams::Ar { phi: 0.6 },
        };
        let (ll_truth, _) = loglik_var(&truth, &sim.table.y, &x, &structure, &bundle).unwrap();

        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut beaten = 0;
        for _ in 0..100 {
            let cand = ParamVector {
                beta: DVector::from_fn(2, |_, _| rng.gen_range(-10.0..10.0)),
                sigma0: rng.gen_range(0.01..5.0),
                sigma: vec![rng.gen_range(0.01..5.0)],
                alpha: vec![rng.gen_range(0.01..4.0)],
                temporal: TemporalParams::Ar { phi: rng.gen_range(-0.99..0.99) },
            };
            let (ll, _) = loglik_var(&cand, &sim.table.y, &x, &structure, &bundle).unwrap();
            if ll_truth > ll {
                beaten += 1;
            }
        }
        assert!(beaten >= 95, "truth beat only {beaten}/100 prior draws");
    }
}
