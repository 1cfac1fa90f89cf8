//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `cargo test --test acceptance -- --nocapture`).

use nalgebra::{DMatrix, DVector};

use ssnst::kernels::{EuclidForm, SpatialComponent, StreamForm};
use ssnst::metrics;
use ssnst::model::likelihood::{loglik_separable, loglik_var, LikelihoodMethod, ModelStructure};
use ssnst::model::params::{ParamVector, TemporalParams};
use ssnst::model::{ObservationPanel, ParamLayout};
use ssnst::network::{DistanceBundle, Site, StreamNetwork, Weighting};
use ssnst::predictor::{self, proportion_above, PredictionTask};
use ssnst::sampler::{impute_all_slices, ImputationOp, McmcConfig};
use ssnst::temporal::{
    ar1_covariance, ar1_precision, var1_block_covariance, PhiContext, TemporalSpec,
};
use ssnst::workbench::config::{
    ComponentConfig, MissingnessConfig, ScenarioConfig, TemporalConfig, TopologyConfig,
};
use ssnst::workbench::pipeline::{central_interval, run_replicate};
use ssnst::workbench::simulate;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Criterion 1 — worked-example exactness: PI, AFV and W reproduce the
/// published values to 3 decimals in under a second.
#[test]
fn acceptance_1_worked_weights() {
    let start = std::time::Instant::now();
    let segments = vec![
        ssnst::network::Segment { id: 1, parent_id: Some(3), length: 2000.0, seg_contrib_area: 17.5, watershed_area: 17.5 },
        ssnst::network::Segment { id: 2, parent_id: Some(3), length: 2200.0, seg_contrib_area: 8.5, watershed_area: 8.5 },
        ssnst::network::Segment { id: 3, parent_id: Some(5), length: 3000.0, seg_contrib_area: 8.0, watershed_area: 34.0 },
        ssnst::network::Segment { id: 4, parent_id: Some(5), length: 2500.0, seg_contrib_area: 5.5, watershed_area: 5.5 },
        ssnst::network::Segment { id: 5, parent_id: None, length: 4000.0, seg_contrib_area: 9.0, watershed_area: 48.5 },
    ];
    let sites = vec![
        Site { site_id: 1, segment_id: 1, updist: 7400.0, x: 4000.0, y: 8200.0 },
        Site { site_id: 2, segment_id: 2, updist: 7300.0, x: 6000.0, y: 8100.0 },
        Site { site_id: 3, segment_id: 3, updist: 6800.0, x: 5000.0, y: 6800.0 },
        Site { site_id: 4, segment_id: 5, updist: 500.0, x: 5200.0, y: 500.0 },
    ];
    let mut net = StreamNetwork::build(segments, sites).unwrap();
    let table = net.compute_afv(&Weighting::WatershedArea).unwrap();
    let expect_pi = [0.673, 0.327, 0.861, 0.139, 1.000];
    let expect_afv = [0.579, 0.281, 0.861, 0.139, 1.000];
    for i in 0..5 {
        assert!((table.pi[i] - expect_pi[i]).abs() < 5e-4, "PI[{i}]");
        assert!((table.afv[i] - expect_afv[i]).abs() < 5e-4, "AFV[{i}]");
    }
    let hd = net.hydrologic_distances();
    let w = net.spatial_weights(&hd.flow_conn).unwrap();
    for (i, j, v) in [
        (0, 2, 0.820),
        (0, 3, 0.761),
        (1, 2, 0.572),
        (1, 3, 0.530),
        (2, 3, 0.928),
    ] {
        assert!((w[(i, j)] - v).abs() < 5e-4, "W[{i},{j}] = {}", w[(i, j)]);
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1.0, "runtime {dt:?}");
    println!("ACCEPTANCE 1 PASS: PI/AFV/W match the worked table to 3 decimals ({dt:?})");
}

/// Criterion 2 — tridiagonal and Kronecker identities within 1e-9.
#[test]
fn acceptance_2_ar1_identities() {
    let start = std::time::Instant::now();
    for phi in [-0.95, -0.6, 0.0, 0.6, 0.95] {
        for t in [2usize, 10, 200] {
            let q = ar1_precision(phi, t).unwrap();
            let c = ar1_covariance(phi, t).unwrap();
            let err = ((&q * &c) - DMatrix::<f64>::identity(t, t)).abs().max();
            assert!(err < 1e-9, "phi={phi} T={t}: max err {err}");
        }
    }
    // Random SPD V, S=3, T=4: dense inverse equals kron(Q, V⁻¹).
    let mut state = 2024u64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let a = DMatrix::from_fn(3, 3, |_, _| next());
    let v = &a * a.transpose() + DMatrix::identity(3, 3);
    let phi = 0.55;
    let dense = var1_block_covariance(&v, phi, 4, 10_000).unwrap();
    let inv = dense.try_inverse().unwrap();
    let kron = ar1_precision(phi, 4)
        .unwrap()
        .kronecker(&v.clone().try_inverse().unwrap());
    let err = (inv - kron).abs().max();
    assert!(err < 1e-9, "kron inverse err {err}");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 5.0, "runtime {dt:?}");
    println!("ACCEPTANCE 2 PASS: AR(1) precision/covariance and Kronecker inverses agree within 1e-9 ({dt:?})");
}

fn random_case1_instance(seed: u64, s: usize, t: usize, phi: f64) -> (
    ModelStructure,
    DistanceBundle,
    ParamVector,
    DMatrix<f64>,
    Vec<DMatrix<f64>>,
    Vec<Site>,
) {
    let mut state = seed.max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let sites: Vec<Site> = (0..s)
        .map(|k| Site {
            site_id: k as i64,
            segment_id: 0,
            updist: 0.0,
            x: next() * 4.0,
            y: next() * 4.0,
        })
        .collect();
    let bundle = DistanceBundle::from_coordinates(&sites);
    let structure = ModelStructure::new(
        vec![SpatialComponent::Euclidean { form: EuclidForm::Exponential, sigma2: 1.0, alpha: 2.0 }],
        TemporalSpec::Ar,
        PhiContext::default(),
        LikelihoodMethod::VarRecursion,
    );
    let params = ParamVector {
        beta: DVector::from_row_slice(&[0.5 + next(), 1.0 + next()]),
        sigma0: 0.2 + 0.3 * (next() + 0.5),
        sigma: vec![0.5 + (next() + 0.5)],
        alpha: vec![1.0 + 2.0 * (next() + 0.5)],
        temporal: TemporalParams::Ar { phi },
    };
    let x: Vec<DMatrix<f64>> = (0..t)
        .map(|_| DMatrix::from_fn(s, 2, |_, c| if c == 0 { 1.0 } else { next() }))
        .collect();
    let y = DMatrix::from_fn(s, t, |_, _| 2.0 * next());
    (structure, bundle, params, y, x, sites)
}

/// Criterion 3 — method equivalence: the conditional VAR likelihood equals
/// the separable joint one within 1e-8 over 100 random scalar-φ draws, and
/// the two kriging routes' means differ by less than 1e-6.
#[test]
fn acceptance_3_method_equivalence() {
    let start = std::time::Instant::now();
    let mut worst_ll = 0.0f64;
    for k in 0..100u64 {
        let phi = -0.9 + 1.8 * ((k * 37 % 100) as f64 + 0.5) / 100.0;
        let s = 2 + (k as usize % 5);
        let t = 2 + ((k as usize * 13) % 5);
        let (structure, bundle, params, y, x, _) = random_case1_instance(900 + k, s, t, phi);
        let (lv, _) = loglik_var(&params, &y, &x, &structure, &bundle).unwrap();
        let ls = loglik_separable(&params, &y, &x, &structure, &bundle).unwrap();
        worst_ll = worst_ll.max((lv - ls).abs());
    }
    assert!(worst_ll < 1e-8, "max |loglik_var - loglik_separable| = {worst_ll}");

    // Kriging parity on a subset of the same instance family.
    let mut worst_krig = 0.0f64;
    for k in 0..10u64 {
        let phi = -0.8 + 1.6 * (k as f64 + 0.5) / 10.0;
        let s = 4 + (k as usize % 3);
        let t = 3 + (k as usize % 3);
        let (structure, _bundle, params, y, x, sites) = random_case1_instance(3000 + k, s, t, phi);
        let layout = ParamLayout::new(2, vec![100.0], TemporalSpec::Ar, s);
        let panel = ObservationPanel::new(
            y.clone(),
            DMatrix::from_element(s, t, true),
            x.clone(),
            (0..s as i64).collect(),
            (0..t).map(|v| v as f64).collect(),
            vec!["intercept".into(), "x1".into()],
        )
        .unwrap();
        let row = layout.constrained_values(&params);
        let n_draws = 60;
        let draws = ssnst::sampler::PosteriorDraws {
            param_names: layout.names(&["intercept".into(), "x1".into()], &["ed".into()]),
            chains: vec![ssnst::sampler::ChainDraws {
                params: DMatrix::from_fn(n_draws, row.len(), |_, c| row[c]),
                imputed: DMatrix::zeros(n_draws, 0),
                pointwise: DMatrix::zeros(n_draws, t),
                accept_rate: vec![],
                final_scales: vec![],
            }],
            missing_cells: vec![],
            n_times: t,
        };
        let pred_sites = vec![
            Site { site_id: 900, segment_id: 0, updist: 0.0, x: 0.37, y: -0.21 },
            Site { site_id: 901, segment_id: 0, updist: 0.0, x: -1.4, y: 0.9 },
        ];
        let xp: Vec<DMatrix<f64>> = (0..t)
            .map(|_| DMatrix::from_fn(2, 2, |_, c| if c == 0 { 1.0 } else { 0.3 }))
            .collect();
        let geom = predictor::build_geometry(&panel, &sites, None, &pred_sites).unwrap();
        let mut task = PredictionTask::defaults(pred_sites, xp);
        task.draw_subsample = n_draws;
        let m1 = predictor::krige(&draws, &layout, &structure, &panel, &geom, &task).unwrap();
        let m2 =
            predictor::krige_var_recursion(&draws, &layout, &structure, &panel, &geom, &task).unwrap();
        worst_krig = worst_krig.max((&m1.mean - &m2.mean).abs().max());
    }
    assert!(worst_krig < 1e-6, "max kriging mean difference = {worst_krig}");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 30.0, "runtime {dt:?}");
    println!(
        "ACCEPTANCE 3 PASS: likelihood routes within {worst_ll:.2e}, kriging routes within {worst_krig:.2e} ({dt:?})"
    );
}

/// Criterion 4 — simulation-study replication at printed scale: 64 sites,
/// T=10, exponential σ²=1 α=1, β=(−1,2), φ=0.6, six held-out full series.
/// Medians over five seeded replicates must sit in the stated bands.
#[test]
fn acceptance_4_simulation_replication() {
    let start = std::time::Instant::now();
    let scenario = |seed: u64| ScenarioConfig {
        topology: TopologyConfig::GridEuclidean { n: 64 },
        components: vec![ComponentConfig {
            family: "euclidean".into(),
            form: "exponential".into(),
            sigma2: 1.0,
            alpha: 1.0,
        }],
        temporal: TemporalConfig::Ar { phi: Some(0.6) },
        beta: vec![-1.0, 2.0],
        nugget_sd: 0.1,
        n_covariates: 1,
        // Site spacing relative to the range: the printed scenario gives no
        // coordinates, so the grid spans a third of the unit square, which
        // reproduces the published error scale (~0.4).
        coordinate_scale: 1.0 / 3.0,
        t: 10,
        missing: MissingnessConfig { random_p: 0.1, block_sites: 6, seed },
        seed,
    };
    let mcmc = McmcConfig {
        chains: 2,
        iterations: 1200,
        warmup: 600,
        seed: 99,
        checkpoint_every: 0,
        ..Default::default()
    };
    let mut imp = Vec::new();
    let mut krig1 = Vec::new();
    let mut krig2 = Vec::new();
    for rep in 0..5u64 {
        let sim = simulate::simulate(&scenario(101 + rep), None).unwrap();
        let out = run_replicate(
            &sim,
            vec![SpatialComponent::Euclidean { form: EuclidForm::Exponential, sigma2: 1.0, alpha: 1.0 }],
            TemporalSpec::Ar,
            &McmcConfig { seed: 99 + rep, ..mcmc.clone() },
            400,
        )
        .unwrap();
        println!(
            "  replicate {rep}: imputation(block) {:.3}, kriging m1 {:.3}, m2 {:.3}, imputation(all) {:.3}",
            out.rmspe_imputation_block,
            out.rmspe_kriging_m1,
            out.rmspe_kriging_m2,
            out.rmspe_imputation_all
        );
        imp.push(out.rmspe_imputation_block);
        krig1.push(out.rmspe_kriging_m1);
        krig2.push(out.rmspe_kriging_m2);
    }
    let med_imp = median(imp);
    let med_k1 = median(krig1);
    let med_k2 = median(krig2);
    assert!((0.30..=0.60).contains(&med_imp), "median imputation RMSPE {med_imp}");
    assert!((0.28..=0.55).contains(&med_k1), "median kriging RMSPE {med_k1}");
    assert!(med_k1 <= med_imp + 0.05, "kriging {med_k1} vs imputation {med_imp}");
    assert!((med_k1 - med_k2).abs() < 0.06, "methods differ: {med_k1} vs {med_k2}");
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 1200.0, "runtime {dt:?}");
    println!(
        "ACCEPTANCE 4 PASS: medians — imputation {med_imp:.3}, kriging m1 {med_k1:.3}, m2 {med_k2:.3} ({dt:?})"
    );
}

/// Criterion 5 — parameter recovery on a tail-down + scalar-φ simulation:
/// the 95% intervals contain the generating β and φ, with R-hat < 1.05 and
/// bulk ESS > 200 on every reported parameter.
#[test]
fn acceptance_5_parameter_recovery() {
    let start = std::time::Instant::now();
    let scn = ScenarioConfig {
        topology: TopologyConfig::RandomTree { n: 30, seed: 77 },
        components: vec![ComponentConfig {
            family: "tail_down".into(),
            form: "exponential".into(),
            sigma2: 1.0,
            alpha: 8000.0,
        }],
        temporal: TemporalConfig::Ar { phi: Some(0.6) },
        beta: vec![-1.0, 2.0],
        nugget_sd: 0.3,
        n_covariates: 1,
        coordinate_scale: 1.0,
        t: 20,
        missing: MissingnessConfig { random_p: 0.1, block_sites: 0, seed: 5 },
        seed: 4242,
    };
    let sim = simulate::simulate(&scn, None).unwrap();
    let mcmc = McmcConfig {
        chains: 4,
        iterations: 7000,
        warmup: 2500,
        seed: 31,
        checkpoint_every: 0,
        ..Default::default()
    };
    let out = run_replicate(
        &sim,
        vec![SpatialComponent::TailDown { form: StreamForm::Exponential, sigma2: 1.0, alpha: 8000.0 }],
        TemporalSpec::Ar,
        &mcmc,
        200,
    )
    .unwrap();
    let draws = &out.draws;
    for (name, truth) in [("beta[intercept]", -1.0), ("beta[x1]", 2.0), ("phi", 0.6)] {
        let (lo, hi) = central_interval(draws, name, 0.95).unwrap();
        println!("  {name}: 95% interval [{lo:.3}, {hi:.3}], truth {truth}");
        assert!(lo <= truth && truth <= hi, "{name} interval [{lo}, {hi}] misses {truth}");
    }
    let diag = draws.diagnostics().unwrap();
    for d in &diag {
        println!("  {}: rhat {:.3} ess {:.0}", d.name, d.rhat, d.ess_bulk);
        assert!(d.rhat < 1.05, "{} rhat {}", d.name, d.rhat);
        assert!(d.ess_bulk > 200.0, "{} ess {}", d.name, d.ess_bulk);
    }
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 900.0, "runtime {dt:?}");
    println!("ACCEPTANCE 5 PASS: β and φ recovered, all R-hat < 1.05, ESS > 200 ({dt:?})");
}

/// Criterion 6 — imputation exactness: the blocked-slice Gibbs conditional
/// matches the dense joint conditional (mean and sd to 1e-8) over an
/// exhaustive sweep of missing patterns at S=3, T=3.
#[test]
fn acceptance_6_imputation_exactness() {
    let start = std::time::Instant::now();
    let s = 3;
    let t_len = 3;
    let phi_scalar = 0.55;
    let kappa = 1.0 / (1.0 - phi_scalar * phi_scalar);
    let v = DMatrix::from_row_slice(3, 3, &[1.3, 0.4, 0.2, 0.4, 1.1, 0.3, 0.2, 0.3, 0.9]);
    let factor = ssnst::kernels::assert_psd(&v, &ssnst::kernels::JitterPolicy::default()).unwrap();
    let phi = DMatrix::identity(s, s) * phi_scalar;
    let op = ImputationOp::new(&factor, phi, kappa);

    // Dense joint covariance via the recursion.
    let n = s * t_len;
    let mut lrec = DMatrix::<f64>::zeros(n, n);
    for t in 0..t_len {
        for u in 0..=t {
            let block = phi_scalar.powi((t - u) as i32) * DMatrix::identity(s, s);
            lrec.view_mut((t * s, u * s), (s, s)).copy_from(&block);
        }
    }
    let mut innov = DMatrix::<f64>::zeros(n, n);
    innov.view_mut((0, 0), (s, s)).copy_from(&(&v * kappa));
    for t in 1..t_len {
        innov.view_mut((t * s, t * s), (s, s)).copy_from(&v);
    }
    let joint = &lrec * innov * lrec.transpose();

    let x_beta: Vec<DVector<f64>> = (0..t_len)
        .map(|t| DVector::from_fn(s, |i, _| 0.4 * t as f64 - 0.2 * i as f64))
        .collect();
    let vals = [0.7, -0.4, 1.2, 0.1, 0.9, -1.1, 0.5, -0.2, 0.8];
    let mut y = DMatrix::zeros(s, t_len);
    for t in 0..t_len {
        for i in 0..s {
            y[(i, t)] = x_beta[t][i] + vals[t * s + i];
        }
    }

    let mut checked = 0;
    for t in 0..t_len {
        for pattern in 1u32..(1 << s) {
            let observed_t: Vec<bool> = (0..s).map(|i| pattern & (1 << i) == 0).collect();
            if observed_t.iter().all(|&o| o) {
                continue;
            }
            let resid: Vec<DVector<f64>> = (0..t_len)
                .map(|u| DVector::from_fn(s, |i, _| y[(i, u)] - x_beta[u][i]))
                .collect();
            let y_t = DVector::from_fn(s, |i, _| y[(i, t)]);
            let cond = op
                .slice_conditional(t, t_len, &resid, &x_beta[t], &y_t, &observed_t)
                .unwrap()
                .unwrap();
            let target: Vec<usize> = cond.missing.iter().map(|&i| t * s + i).collect();
            let given: Vec<usize> = (0..n).filter(|k| !target.contains(k)).collect();
            let mu_full: Vec<f64> = (0..n).map(|k| x_beta[k / s][k % s]).collect();
            let cov_tt = DMatrix::from_fn(target.len(), target.len(), |i, j| joint[(target[i], target[j])]);
            let cov_tg = DMatrix::from_fn(target.len(), given.len(), |i, j| joint[(target[i], given[j])]);
            let cov_gg = DMatrix::from_fn(given.len(), given.len(), |i, j| joint[(given[i], given[j])]);
            let dev = DVector::from_fn(given.len(), |j, _| {
                y[(given[j] % s, given[j] / s)] - mu_full[given[j]]
            });
            let gg_inv = cov_gg.try_inverse().unwrap();
            let mean_o = DVector::from_fn(target.len(), |i, _| mu_full[target[i]]) + &cov_tg * &gg_inv * dev;
            let cov_o = &cov_tt - &cov_tg * gg_inv * cov_tg.transpose();
            let sd = cond.marginal_sd();
            for i in 0..target.len() {
                assert!((cond.mean[i] - mean_o[i]).abs() < 1e-8, "mean t={t} pattern={pattern:b}");
                assert!((sd[i] - cov_o[(i, i)].sqrt()).abs() < 1e-8, "sd t={t} pattern={pattern:b}");
            }
            checked += 1;
        }
    }
    // Sanity: the sweep-and-sample path also runs.
    let mut rng = <rand_chacha::ChaCha20Rng as rand::SeedableRng>::seed_from_u64(9);
    let observed = DMatrix::from_fn(s, t_len, |i, t| (i + t) % 3 != 0);
    let mut y2 = y.clone();
    impute_all_slices(&op, &mut y2, &x_beta, &observed, &mut rng).unwrap();
    let dt = start.elapsed();
    assert!(dt.as_secs_f64() < 60.0, "runtime {dt:?}");
    println!("ACCEPTANCE 6 PASS: {checked} slice/pattern conditionals match the dense joint to 1e-8 ({dt:?})");
}

/// Criterion 7 — metric oracles: point-forecast CRPS = MAE exactly, sample
/// CRPS vs the analytic Gaussian value within 2 MC standard errors at 10⁴
/// draws, WAIC matches a hand case to 1e-12, and the coverage categories
/// follow the exact-binomial thresholds.
#[test]
fn acceptance_7_metric_oracles() {
    let start = std::time::Instant::now();
    // Point forecast: CRPS == MAE.
    let point = DMatrix::from_element(100, 2, 3.0);
    let crps = metrics::crps_sample(&point, &[1.0, 5.5]).unwrap();
    assert_eq!(crps, (2.0 + 2.5) / 2.0);

    // Gaussian oracle at 1e4 draws.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(123);
    let n = 10_000;
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let full = metrics::crps_cell(&draws, 0.0).unwrap();
    let batches: Vec<f64> = draws.chunks(n / 20).map(|c| metrics::crps_cell(c, 0.0).unwrap()).collect();
    let bm = batches.iter().sum::<f64>() / batches.len() as f64;
    let bvar = batches.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches.len() as f64 - 1.0);
    let se = (bvar / batches.len() as f64).sqrt();
    let analytic = 2.0 / (2.0 * std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt();
    assert!(
        (full - analytic).abs() <= 2.0 * se + 1e-3,
        "CRPS {full} vs analytic {analytic} (se {se})"
    );

    // WAIC hand case to 1e-12.
    let ll = DMatrix::from_row_slice(2, 2, &[-1.0, -2.0, -1.5, -2.5]);
    let w = metrics::waic(&ll).unwrap();
    let lppd = (((-1.0f64).exp() + (-1.5f64).exp()) / 2.0).ln()
        + (((-2.0f64).exp() + (-2.5f64).exp()) / 2.0).ln();
    let p = 0.0625 + 0.0625;
    assert!((w.waic - (-2.0 * (lppd - p))).abs() < 1e-12);

    // Coverage categories at the 0.05 / 0.10 exact-binomial thresholds.
    // n = 200, nominal 0.95: find ks spanning the three categories.
    let mut seen = std::collections::BTreeSet::new();
    for k in 170..=200u64 {
        let p = metrics::exact_binomial_two_sided(k, 200, 0.95);
        let cat = if p >= 0.10 {
            "consistent"
        } else if p >= 0.05 {
            "borderline"
        } else {
            "inconsistent"
        };
        let intervals: Vec<(f64, f64)> = (0..200).map(|_| (0.0, 1.0)).collect();
        let truths: Vec<f64> = (0..200).map(|i| if (i as u64) < k { 0.5 } else { 2.0 }).collect();
        let (prop, pv, category) = metrics::coverage(&intervals, &truths, 0.95).unwrap();
        assert!((prop - k as f64 / 200.0).abs() < 1e-12);
        assert!((pv - p).abs() < 1e-12);
        let got = match category {
            metrics::CoverageCategory::Consistent => "consistent",
            metrics::CoverageCategory::Borderline => "borderline",
            metrics::CoverageCategory::Inconsistent => "inconsistent",
        };
        assert_eq!(got, cat, "k={k}");
        seen.insert(cat);
    }
    assert_eq!(seen.len(), 3, "sweep should hit all three categories");
    let dt = start.elapsed();
    println!("ACCEPTANCE 7 PASS: CRPS/WAIC/coverage oracles hold ({dt:?})");
}

/// Criterion 8 — worked conversion: a draw matrix engineered to 36%
/// exceedance reproduces 0.36 × 7364 ≈ 2651 km.
#[test]
fn acceptance_8_proportion_conversion() {
    let start = std::time::Instant::now();
    // 100 prediction sites, 36 always above the 13-degree threshold.
    let n_draws = 200;
    let draws: Vec<DMatrix<f64>> = (0..n_draws)
        .map(|_| DMatrix::from_fn(100, 1, |p, _| if p < 36 { 14.5 } else { 9.0 }))
        .collect();
    let prop = proportion_above(&draws, 13.0);
    assert_eq!(prop.nrows(), n_draws);
    for d in 0..n_draws {
        let km = prop[(d, 0)] * 7364.0;
        assert!((km - 2651.0).abs() < 1.0, "draw {d}: {km} km");
    }
    let dt = start.elapsed();
    println!("ACCEPTANCE 8 PASS: 36% of 7364 km ≈ 2651 km reproduced ({dt:?})");
}
