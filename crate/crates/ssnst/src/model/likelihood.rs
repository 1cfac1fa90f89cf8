//! Log-likelihood in the conditional VAR form (method 2) and the separable
//! joint form (method 1), plus the posterior that ties priors, transforms
//! and likelihood together.
//!
//! Method 2 evaluates Π_{t≥2} N(y_t; X_tβ + Φ(y_{t-1} − X_{t-1}β), V) · N(y₁),
//! with V = Σ + σ₀²I. The t = 1 slice uses the stationary covariance
//! V/(1 − φ²) in the scalar-φ case — which makes the two methods exactly
//! equal — and V itself otherwise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{assert_psd, cov_mixture, JitterPolicy, SpatialComponent, SpdFactor};
use crate::network::DistanceBundle;
use crate::temporal::{
    ar1_log_det, ar1_precision, build_phi, PhiContext, TemporalSpec,
};

use super::params::ParamVector;
use super::priors::{log_prior, PriorConfig};

const LN_2PI: f64 = 1.8378770664093453;

/// Which likelihood route the posterior uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodMethod {
    /// Conditional VAR recursion (method 2, the default).
    VarRecursion,
    /// Separable joint Gaussian via Kronecker identities (method 1,
    /// scalar-φ case only).
    Separable,
}

/// Immutable description of the model: component forms, temporal case and
/// its context, and the likelihood route.
#[derive(Debug, Clone)]
pub struct ModelStructure {
    /// Component templates; σ²/α are overwritten from sampled parameters.
    pub components: Vec<SpatialComponent>,
    pub temporal: TemporalSpec,
    pub phi_ctx: PhiContext,
    pub method: LikelihoodMethod,
    pub jitter: JitterPolicy,
}

impl ModelStructure {
    pub fn new(
        components: Vec<SpatialComponent>,
        temporal: TemporalSpec,
        phi_ctx: PhiContext,
        method: LikelihoodMethod,
    ) -> Self {
        ModelStructure {
            components,
            temporal,
            phi_ctx,
            method,
            jitter: JitterPolicy::default(),
        }
    }

    /// Components with (σ², α) taken from a parameter vector.
    pub fn components_with(&self, params: &ParamVector) -> Vec<SpatialComponent> {
        self.components
            .iter()
            .zip(params.sigma.iter().zip(&params.alpha))
            .map(|(c, (s, a))| c.with_params(s * s, *a))
            .collect()
    }

    /// V = Σ + σ₀²I and its Cholesky factor.
    pub fn assemble_v(
        &self,
        params: &ParamVector,
        bundle: &DistanceBundle,
    ) -> Result<(DMatrix<f64>, SpdFactor)> {
        let comps = self.components_with(params);
        let mut v = cov_mixture(&comps, bundle)?;
        let nug = params.sigma0 * params.sigma0;
        for i in 0..v.nrows() {
            v[(i, i)] += nug;
        }
        let factor = assert_psd(&v, &self.jitter)?;
        Ok((v, factor))
    }

    /// Transition matrix for a parameter vector; `build_phi` gates
    /// stability and the posterior maps its `UnstablePhi` to −∞.
    pub fn phi_matrix(&self, params: &ParamVector, n_sites: usize) -> Result<DMatrix<f64>> {
        let flat = params.temporal.flat();
        build_phi(&self.temporal, &flat, n_sites, &self.phi_ctx)
    }
}

fn mvn_logpdf_with_factor(resid: &DVector<f64>, factor: &SpdFactor, log_det: f64) -> f64 {
    let solved = factor.solve_vec(resid);
    let quad = resid.dot(&solved);
    -0.5 * (resid.len() as f64 * LN_2PI + log_det + quad)
}

/// Conditional VAR log-likelihood over a *complete* response matrix.
///
/// Returns the total and the per-time-slice vector (slice 1 included);
/// the pointwise vector feeds WAIC.
pub fn loglik_var(
    params: &ParamVector,
    y: &DMatrix<f64>,
    x: &[DMatrix<f64>],
    structure: &ModelStructure,
    bundle: &DistanceBundle,
) -> Result<(f64, Vec<f64>)> {
    let (s, t_len) = y.shape();
    let (_, factor) = structure.assemble_v(params, bundle)?;
    let log_det = factor.log_det();
    let phi = structure.phi_matrix(params, s)?;

    // Residuals from the fixed effects.
    let resid: Vec<DVector<f64>> = (0..t_len)
        .map(|t| DVector::from(y.column(t) - &x[t] * &params.beta))
        .collect();

    let mut pointwise = Vec::with_capacity(t_len);
    // Slice 1: stationary scaling in the scalar-φ case, κ = 1 otherwise.
    let kappa = match params.temporal.scalar_phi() {
        Some(phi1) => 1.0 / (1.0 - phi1 * phi1),
        None => 1.0,
    };
    let solved = factor.solve_vec(&resid[0]);
    let quad1 = resid[0].dot(&solved) / kappa;
    pointwise.push(-0.5 * (s as f64 * LN_2PI + s as f64 * kappa.ln() + log_det + quad1));

    for t in 1..t_len {
        let innov = &resid[t] - &phi * &resid[t - 1];
        pointwise.push(mvn_logpdf_with_factor(&innov, &factor, log_det));
    }
    Ok((pointwise.iter().sum(), pointwise))
}

/// Separable joint log-likelihood (method 1): the stacked vector is
/// N(Xβ, Σ_ar1(φ) ⊗ V), evaluated through the Kronecker determinant rule
/// and the tridiagonal temporal precision without forming the joint matrix.
pub fn loglik_separable(
    params: &ParamVector,
    y: &DMatrix<f64>,
    x: &[DMatrix<f64>],
    structure: &ModelStructure,
    bundle: &DistanceBundle,
) -> Result<f64> {
    let phi = params
        .temporal
        .scalar_phi()
        .ok_or(Error::UnsupportedCase("separable likelihood needs scalar φ (case 1)"))?;
    let (s, t_len) = y.shape();
    let (_, factor) = structure.assemble_v(params, bundle)?;
    let log_det_v = factor.log_det();

    let mut resid = DMatrix::zeros(s, t_len);
    for t in 0..t_len {
        resid.set_column(t, &DVector::from(y.column(t) - &x[t] * &params.beta));
    }
    let solved = factor.solve(&resid);
    let q = ar1_precision(phi, t_len)?;
    let rq = solved * q;
    let quad: f64 = resid.iter().zip(rq.iter()).map(|(a, b)| a * b).sum();
    let log_det = s as f64 * ar1_log_det(phi) + t_len as f64 * log_det_v;
    Ok(-0.5 * ((s * t_len) as f64 * LN_2PI + log_det + quad))
}

/// Pieces of one posterior evaluation.
#[derive(Debug, Clone)]
pub struct PosteriorParts {
    pub log_posterior: f64,
    /// Per-time-slice log densities (empty when the prior already rejected
    /// or the separable route was used).
    pub pointwise: Vec<f64>,
}

/// Log posterior density of an *unconstrained* vector: prior + transform
/// log-Jacobian + likelihood. `UnstablePhi` maps to −∞; genuine numerical
/// failures propagate as errors.
pub fn log_posterior_parts(
    u: &DVector<f64>,
    layout: &super::params::ParamLayout,
    priors: &PriorConfig,
    structure: &ModelStructure,
    bundle: &DistanceBundle,
    y: &DMatrix<f64>,
    x: &[DMatrix<f64>],
) -> Result<PosteriorParts> {
    let (params, jac) = layout.constrain(u)?;
    let lp = log_prior(&params, priors);
    if lp == f64::NEG_INFINITY {
        return Ok(PosteriorParts { log_posterior: f64::NEG_INFINITY, pointwise: vec![] });
    }
    let like = match structure.method {
        LikelihoodMethod::VarRecursion => loglik_var(&params, y, x, structure, bundle),
        LikelihoodMethod::Separable => {
            loglik_separable(&params, y, x, structure, bundle).map(|t| (t, vec![]))
        }
    };
    match like {
        Ok((total, pointwise)) => Ok(PosteriorParts {
            log_posterior: lp + jac + total,
            pointwise,
        }),
        Err(Error::UnstablePhi(_)) => Ok(PosteriorParts {
            log_posterior: f64::NEG_INFINITY,
            pointwise: vec![],
        }),
        Err(e) => Err(e),
    }
}

/// Scalar log posterior; see [`log_posterior_parts`].
pub fn log_posterior(
    u: &DVector<f64>,
    layout: &super::params::ParamLayout,
    priors: &PriorConfig,
    structure: &ModelStructure,
    bundle: &DistanceBundle,
    y: &DMatrix<f64>,
    x: &[DMatrix<f64>],
) -> Result<f64> {
    log_posterior_parts(u, layout, priors, structure, bundle, y, x).map(|p| p.log_posterior)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::kernels::EuclidForm;
    use crate::model::params::{ParamLayout, TemporalParams};
    use crate::model::priors::PhiPrior;
    use crate::network::Site;
    use crate::temporal::var1_block_covariance;

    pub(crate) struct Toy {
        pub structure: ModelStructure,
        pub bundle: DistanceBundle,
        pub params: ParamVector,
        pub y: DMatrix<f64>,
        pub x: Vec<DMatrix<f64>>,
    }

    /// Small Euclidean-exponential Case-1 instance with seeded data.
    pub(crate) fn toy_case1(s: usize, t: usize, phi: f64, seed: u64) -> Toy {
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
                x: next() * 10.0,
                y: next() * 10.0,
            })
            .collect();
        let bundle = DistanceBundle::from_coordinates(&sites);
        let structure = ModelStructure::new(
            vec![SpatialComponent::Euclidean { form: EuclidForm::Exponential, sigma2: 1.0, alpha: 5.0 }],
            TemporalSpec::Ar,
            PhiContext::default(),
            LikelihoodMethod::VarRecursion,
        );
        let params = ParamVector {
            beta: DVector::from_row_slice(&[-1.0, 2.0]),
            sigma0: 0.3,
            sigma: vec![1.1],
            alpha: vec![4.0],
            temporal: TemporalParams::Ar { phi },
        };
        let x: Vec<DMatrix<f64>> = (0..t)
            .map(|_| DMatrix::from_fn(s, 2, |_, c| if c == 0 { 1.0 } else { next() }))
            .collect();
        let y = DMatrix::from_fn(s, t, |_, _| next() * 2.0);
        Toy { structure, bundle, params, y, x }
    }

    /// Dense oracle: joint covariance of the stacked residual built from the
    /// recursion, evaluated as one big MVN.
    pub(crate) fn dense_joint_loglik(toy: &Toy, kappa: f64) -> f64 {
        let (s, t_len) = toy.y.shape();
        let (v, _) = toy.structure.assemble_v(&toy.params, &toy.bundle).unwrap();
        let phi = toy.structure.phi_matrix(&toy.params, s).unwrap();
        // Stacked residual r, cov = L_rec blkdiag(κV, V, ..) L_rec'.
        let n = s * t_len;
        let mut lrec = DMatrix::zeros(n, n);
        // block (t, u) = Φ^{t-u} for t >= u
        let mut pow = vec![DMatrix::identity(s, s)];
        for _ in 1..t_len {
            let last = pow.last().unwrap() * &phi;
            pow.push(last);
        }
        for t in 0..t_len {
            for u in 0..=t {
                lrec.view_mut((t * s, u * s), (s, s)).copy_from(&pow[t - u]);
            }
        }
        let mut innov = DMatrix::zeros(n, n);
        innov.view_mut((0, 0), (s, s)).copy_from(&(&v * kappa));
        for t in 1..t_len {
            innov.view_mut((t * s, t * s), (s, s)).copy_from(&v);
        }
        let cov = &lrec * innov * lrec.transpose();
        let mut r = DVector::zeros(n);
        for t in 0..t_len {
            let rt = toy.y.column(t) - &toy.x[t] * &toy.params.beta;
            r.rows_mut(t * s, s).copy_from(&rt);
        }
        let inv = cov.clone().try_inverse().unwrap();
        let quad = r.dot(&(inv * &r));
        let logdet = cov.determinant().ln();
        -0.5 * (n as f64 * LN_2PI + logdet + quad)
    }

    #[test]
    fn var_reduces_to_independent_normals() {
        // Φ = 0, Σ ≈ 0: every cell is an independent N(x'β, σ₀²).
        let mut toy = toy_case1(3, 4, 0.0, 7);
        toy.params.sigma = vec![1e-9];
        let (total, pointwise) = loglik_var(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        let mut expect = 0.0;
        for t in 0..4 {
            for s in 0..3 {
                let mu = toy.x[t].row(s).transpose().dot(&toy.params.beta);
                let z = (toy.y[(s, t)] - mu) / toy.params.sigma0;
                expect += -0.5 * z * z - toy.params.sigma0.ln() - 0.5 * LN_2PI;
            }
        }
        assert!((total - expect).abs() < 1e-6, "{total} vs {expect}");
        assert_eq!(pointwise.len(), 4);
        let sum: f64 = pointwise.iter().sum();
        assert!((sum - total).abs() < 1e-10);
    }

    #[test]
    fn var_matches_dense_joint_oracle() {
        let toy = toy_case1(2, 3, 0.55, 42);
        let (total, _) = loglik_var(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        let kappa = 1.0 / (1.0 - 0.55f64 * 0.55);
        let oracle = dense_joint_loglik(&toy, kappa);
        assert!((total - oracle).abs() < 1e-8, "{total} vs {oracle}");
    }

    #[test]
    fn separable_matches_dense_oracle() {
        let toy = toy_case1(3, 4, -0.35, 11);
        let sep = loglik_separable(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        // Dense oracle straight from the Kronecker covariance.
        let (v, _) = toy.structure.assemble_v(&toy.params, &toy.bundle).unwrap();
        let cov = var1_block_covariance(&v, -0.35, 4, 10_000).unwrap();
        let mut r = DVector::zeros(12);
        for t in 0..4 {
            let rt = toy.y.column(t) - &toy.x[t] * &toy.params.beta;
            r.rows_mut(t * 3, 3).copy_from(&rt);
        }
        let inv = cov.clone().try_inverse().unwrap();
        let quad = r.dot(&(inv * &r));
        let oracle = -0.5 * (12.0 * LN_2PI + cov.determinant().ln() + quad);
        assert!((sep - oracle).abs() < 1e-9, "{sep} vs {oracle}");
    }

    #[test]
    fn separable_phi_zero_is_slicewise_product() {
        let toy = toy_case1(3, 5, 0.0, 23);
        let sep = loglik_separable(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        let (_, factor) = toy.structure.assemble_v(&toy.params, &toy.bundle).unwrap();
        let log_det = factor.log_det();
        let mut expect = 0.0;
        for t in 0..5 {
            let rt = DVector::from(toy.y.column(t) - &toy.x[t] * &toy.params.beta);
            expect += mvn_logpdf_with_factor(&rt, &factor, log_det);
        }
        assert!((sep - expect).abs() < 1e-9);
    }

    /// Method equivalence over 100 random scalar-φ draws.
    #[test]
    fn method_equivalence_case1() {
        let mut worst = 0.0f64;
        for k in 0..100 {
            let phi = -0.9 + 1.8 * ((k * 37 % 100) as f64 + 0.5) / 100.0;
            let toy = toy_case1(2 + k % 5, 2 + (k * 13) % 5, phi, 1000 + k as u64);
            let (var, _) = loglik_var(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
            let sep = loglik_separable(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
            worst = worst.max((var - sep).abs());
        }
        assert!(worst < 1e-8, "max |var - separable| = {worst}");
    }

    #[test]
    fn posterior_outside_support_is_neg_inf() {
        let toy = toy_case1(3, 3, 0.5, 5);
        let layout = ParamLayout::new(2, vec![1000.0], TemporalSpec::Ar, 3);
        let priors = PriorConfig {
            beta_sd: 10.0,
            sigma0_bound: 50.0,
            sigma_bound: 100.0,
            alpha_max: vec![1000.0],
            phi: PhiPrior::Uniform,
        };
        let mut u = layout.unconstrain(&toy.params).unwrap();
        // push log sigma0 beyond the u(0,50) bound
        u[2] = (60.0f64).ln();
        let lp = log_posterior(&u, &layout, &priors, &toy.structure, &toy.bundle, &toy.y, &toy.x).unwrap();
        assert_eq!(lp, f64::NEG_INFINITY);
    }

    #[test]
    fn posterior_translation_invariance_via_intercept() {
        // Adding c to y and c to the intercept coefficient leaves the
        // likelihood term unchanged.
        let toy = toy_case1(3, 4, 0.4, 9);
        let (l0, _) = loglik_var(&toy.params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        let mut shifted = toy.params.clone();
        shifted.beta[0] += 5.0;
        let y2 = toy.y.map(|v| v + 5.0);
        let (l1, _) = loglik_var(&shifted, &y2, &toy.x, &toy.structure, &toy.bundle).unwrap();
        assert!((l0 - l1).abs() < 1e-8);
    }

    #[test]
    fn posterior_is_sum_of_tested_parts() {
        let toy = toy_case1(3, 3, 0.5, 77);
        let layout = ParamLayout::new(2, vec![1000.0], TemporalSpec::Ar, 3);
        let priors = PriorConfig {
            beta_sd: 10.0,
            sigma0_bound: 50.0,
            sigma_bound: 100.0,
            alpha_max: vec![1000.0],
            phi: PhiPrior::Uniform,
        };
        let u = layout.unconstrain(&toy.params).unwrap();
        let lp = log_posterior(&u, &layout, &priors, &toy.structure, &toy.bundle, &toy.y, &toy.x).unwrap();
        let (params, jac) = layout.constrain(&u).unwrap();
        let prior = log_prior(&params, &priors);
        let (like, _) = loglik_var(&params, &toy.y, &toy.x, &toy.structure, &toy.bundle).unwrap();
        assert!((lp - (prior + jac + like)).abs() < 1e-10);
    }

    /// Round-tripping the parameters through the transform leaves the
    /// posterior unchanged.
    #[test]
    fn posterior_invariant_to_round_trip() {
        let toy = toy_case1(4, 3, 0.2, 99);
        let layout = ParamLayout::new(2, vec![1000.0], TemporalSpec::Ar, 4);
        let priors = PriorConfig {
            beta_sd: 10.0,
            sigma0_bound: 50.0,
            sigma_bound: 100.0,
            alpha_max: vec![1000.0],
            phi: PhiPrior::Uniform,
        };
        let u = layout.unconstrain(&toy.params).unwrap();
        let (p2, _) = layout.constrain(&u).unwrap();
        let u2 = layout.unconstrain(&p2).unwrap();
        let lp1 = log_posterior(&u, &layout, &priors, &toy.structure, &toy.bundle, &toy.y, &toy.x).unwrap();
        let lp2 = log_posterior(&u2, &layout, &priors, &toy.structure, &toy.bundle, &toy.y, &toy.x).unwrap();
        assert!((lp1 - lp2).abs() < 1e-9);
        assert!((&u2 - &u).abs().max() < 1e-9);
    }

    /// 1-D profile sanity: the likelihood at the data-generating σ₀ beats
    /// clearly perturbed values on simulated data (non-strict unimodality
    /// check).
    #[test]
    fn sigma0_profile_peaks_near_truth() {
        // Simulate from the model: Φ=0, Σ tiny, nugget 0.5.
        let s = 20;
        let t = 30;
        let mut toy = toy_case1(s, t, 0.0, 314);
        toy.params.sigma = vec![1e-6];
        toy.params.sigma0 = 0.5;
        let mut state = 8899u64;
        let mut gauss = move || {
            let mut unit = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
            };
            let (u1, u2) = (unit(), unit());
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let mut y = DMatrix::zeros(s, t);
        for tt in 0..t {
            for ss in 0..s {
                let mu = toy.x[tt].row(ss).transpose().dot(&toy.params.beta);
                y[(ss, tt)] = mu + 0.5 * gauss();
            }
        }
        let eval = |sig0: f64| {
            let mut p = toy.params.clone();
            p.sigma0 = sig0;
            loglik_var(&p, &y, &toy.x, &toy.structure, &toy.bundle).unwrap().0
        };
        let at_truth = eval(0.5);
        assert!(at_truth > eval(0.2));
        assert!(at_truth > eval(1.2));
    }
}
