//! Prior configuration and log-prior evaluation.
//!
//! Defaults: β ~ N(0, sd 10), σ₀ ~ U(0, 50), component σ ~ U(0, 100),
//! ranges α ~ U(0, α_max) with α_max four times the largest distance of the
//! component's own metric, and case-specific φ priors.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::network::DistanceBundle;
use crate::temporal::TemporalSpec;

use super::params::{ParamVector, TemporalParams};

/// Prior on the temporal block.
#[derive(Debug, Clone, PartialEq)]
pub enum PhiPrior {
    /// U(-1, 1) per entry (cases 1 and 3).
    Uniform,
    /// Truncated normal on [-1, 1] per site (case 2a).
    TruncNormal { mean: f64, sd: f64 },
    /// Case 2a with common hyperparameters: φ_s ~ TN(μ_φ, σ_φ)[-1,1],
    /// μ_φ ~ N(mu_mean, mu_sd), σ_φ ~ U(0, sigma_bound).
    Hierarchical { mu_mean: f64, mu_sd: f64, sigma_bound: f64 },
    /// Case 2b link-scale coefficients: γ_j ~ N(0, sd).
    GammaNormal { sd: f64 },
}

#[derive(Debug, Clone)]
pub struct PriorConfig {
    /// Standard deviation of the N(0, ·) prior on each β.
    pub beta_sd: f64,
    /// Upper bound of the U(0, ·) prior on the nugget sd σ₀.
    pub sigma0_bound: f64,
    /// Upper bound of the U(0, ·) prior on each component sd.
    pub sigma_bound: f64,
    /// Per-component range bound: 4·max(H) for stream components,
    /// 4·max(D) for the Euclidean one.
    pub alpha_max: Vec<f64>,
    pub phi: PhiPrior,
}

impl PriorConfig {
    /// Default priors for a given component list and temporal case.
    pub fn defaults(
        components: &[crate::kernels::SpatialComponent],
        temporal: &TemporalSpec,
        bundle: &DistanceBundle,
    ) -> Result<Self> {
        let max_h = bundle.h.max();
        let max_d = bundle.d.max();
        let mut alpha_max = Vec::with_capacity(components.len());
        for c in components {
            let m = match c {
                crate::kernels::SpatialComponent::Euclidean { .. } => max_d,
                _ => max_h,
            };
            if !(m > 0.0) {
                return Err(Error::ConfigInvalid(
                    "cannot derive alpha_max: all pairwise distances are zero".into(),
                ));
            }
            alpha_max.push(4.0 * m);
        }
        let phi = match temporal {
            TemporalSpec::Ar | TemporalSpec::Var2nn { .. } => PhiPrior::Uniform,
            TemporalSpec::VarSitewise { hierarchical: false } => {
                PhiPrior::TruncNormal { mean: 0.5, sd: 0.2 }
            }
            TemporalSpec::VarSitewise { hierarchical: true } => PhiPrior::Hierarchical {
                mu_mean: 0.5,
                mu_sd: 0.2,
                sigma_bound: 2.0,
            },
            TemporalSpec::VarCovariate { .. } => PhiPrior::GammaNormal { sd: 10.0 },
        };
        Ok(PriorConfig {
            beta_sd: 10.0,
            sigma0_bound: 50.0,
            sigma_bound: 100.0,
            alpha_max,
            phi,
        })
    }

    pub fn validate_for(&self, temporal: &TemporalSpec) -> Result<()> {
        let ok = matches!(
            (temporal, &self.phi),
            (TemporalSpec::Ar, PhiPrior::Uniform)
                | (TemporalSpec::Ar, PhiPrior::TruncNormal { .. })
                | (TemporalSpec::Var2nn { .. }, PhiPrior::Uniform)
                | (TemporalSpec::VarSitewise { hierarchical: false }, PhiPrior::Uniform)
                | (TemporalSpec::VarSitewise { hierarchical: false }, PhiPrior::TruncNormal { .. })
                | (TemporalSpec::VarSitewise { hierarchical: true }, PhiPrior::Hierarchical { .. })
                | (TemporalSpec::VarCovariate { .. }, PhiPrior::GammaNormal { .. })
        );
        if ok {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "phi prior {:?} incompatible with temporal case {:?}",
                self.phi, temporal
            )))
        }
    }
}

fn normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// log density of a normal truncated to [-1, 1].
fn trunc_normal_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    if !(-1.0..=1.0).contains(&x) {
        return f64::NEG_INFINITY;
    }
    let n = Normal::new(mean, sd).expect("valid normal");
    let z = n.cdf(1.0) - n.cdf(-1.0);
    normal_logpdf(x, mean, sd) - z.ln()
}

/// Sum of prior log densities on the constrained scale; −∞ outside support.
///
/// Transform log-Jacobians are *not* included here; the posterior adds the
/// Jacobian reported by [`super::params::ParamLayout::constrain`] when it
/// works in the unconstrained space.
pub fn log_prior(params: &ParamVector, priors: &PriorConfig) -> f64 {
    let mut lp = 0.0;
    for b in params.beta.iter() {
        lp += normal_logpdf(*b, 0.0, priors.beta_sd);
    }
    if params.sigma0 <= 0.0 || params.sigma0 >= priors.sigma0_bound {
        return f64::NEG_INFINITY;
    }
    lp -= priors.sigma0_bound.ln();
    for s in &params.sigma {
        if *s <= 0.0 || *s >= priors.sigma_bound {
            return f64::NEG_INFINITY;
        }
        lp -= priors.sigma_bound.ln();
    }
    for (a, amax) in params.alpha.iter().zip(&priors.alpha_max) {
        if *a <= 0.0 || *a >= *amax {
            return f64::NEG_INFINITY;
        }
        lp -= amax.ln();
    }
    lp += match (&params.temporal, &priors.phi) {
        (TemporalParams::Ar { phi }, PhiPrior::Uniform) => {
            if phi.abs() >= 1.0 {
                return f64::NEG_INFINITY;
            }
            -(2.0f64).ln()
        }
        (TemporalParams::Ar { phi }, PhiPrior::TruncNormal { mean, sd }) => {
            trunc_normal_logpdf(*phi, *mean, *sd)
        }
        (TemporalParams::VarSitewise { phi, hyper: None }, PhiPrior::Uniform) => {
            if phi.iter().any(|p| p.abs() >= 1.0) {
                return f64::NEG_INFINITY;
            }
            -(2.0f64).ln() * phi.len() as f64
        }
        (TemporalParams::VarSitewise { phi, hyper: None }, PhiPrior::TruncNormal { mean, sd }) => {
            phi.iter().map(|p| trunc_normal_logpdf(*p, *mean, *sd)).sum()
        }
        (
            TemporalParams::VarSitewise { phi, hyper: Some((mu, sd)) },
            PhiPrior::Hierarchical { mu_mean, mu_sd, sigma_bound },
        ) => {
            if *sd <= 0.0 || *sd >= *sigma_bound {
                return f64::NEG_INFINITY;
            }
            let sites: f64 = phi.iter().map(|p| trunc_normal_logpdf(*p, *mu, *sd)).sum();
            sites + normal_logpdf(*mu, *mu_mean, *mu_sd) - sigma_bound.ln()
        }
        (TemporalParams::VarCovariate { gamma }, PhiPrior::GammaNormal { sd }) => {
            gamma.iter().map(|g| normal_logpdf(*g, 0.0, *sd)).sum()
        }
        (TemporalParams::Var2nn { diag, neighbor }, PhiPrior::Uniform) => {
            if diag.iter().any(|p| p.abs() >= 1.0)
                || neighbor.iter().flatten().any(|p| p.abs() >= 1.0)
            {
                return f64::NEG_INFINITY;
            }
            -(2.0f64).ln() * (diag.len() + 2 * neighbor.len()) as f64
        }
        _ => return f64::NEG_INFINITY,
    };
    lp
}
