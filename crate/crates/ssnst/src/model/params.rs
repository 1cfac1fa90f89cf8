//! Constrained parameters and the bijection to the sampler's unconstrained
//! space.
//!
//! Transforms: regression coefficients are untransformed, standard
//! deviations live on the log scale, ranges map to (0, α_max) through a
//! scaled logit, and (-1, 1) autoregression entries go through tanh. The
//! log-Jacobian of the full map is accumulated exactly so that densities
//! stated on the constrained scale can be evaluated in either space.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::temporal::TemporalSpec;

/// Temporal parameter block on the constrained scale.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalParams {
    /// Case 1: one φ in (-1, 1).
    Ar { phi: f64 },
    /// Case 2a: site-specific φ_s in (-1, 1); hierarchical variants carry
    /// the hyperparameters (μ_φ unbounded, σ_φ > 0).
    VarSitewise { phi: Vec<f64>, hyper: Option<(f64, f64)> },
    /// Case 2b: link-scale regression coefficients γ_0.. γ_J, unbounded.
    VarCovariate { gamma: Vec<f64> },
    /// Case 3: per-site diagonal entries and the two neighbour entries,
    /// each in (-1, 1).
    Var2nn { diag: Vec<f64>, neighbor: Vec<[f64; 2]> },
}

impl TemporalParams {
    /// Flatten in the order `build_phi` expects.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            TemporalParams::Ar { phi } => vec![*phi],
            TemporalParams::VarSitewise { phi, .. } => phi.clone(),
            TemporalParams::VarCovariate { gamma } => gamma.clone(),
            TemporalParams::Var2nn { diag, neighbor } => {
                let mut out = diag.clone();
                for pair in neighbor {
                    out.extend_from_slice(pair);
                }
                out
            }
        }
    }

    /// Scalar φ when the case has one.
    pub fn scalar_phi(&self) -> Option<f64> {
        match self {
            TemporalParams::Ar { phi } => Some(*phi),
            _ => None,
        }
    }
}

/// Full constrained parameter set for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub beta: DVector<f64>,
    /// Nugget standard deviation σ₀.
    pub sigma0: f64,
    /// Per-component partial-sill standard deviations.
    pub sigma: Vec<f64>,
    /// Per-component ranges, each in (0, α_max).
    pub alpha: Vec<f64>,
    pub temporal: TemporalParams,
}

/// Shape of the parameter space: dimensions plus the range bounds needed by
/// the scaled-logit transform.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub n_beta: usize,
    pub n_components: usize,
    pub alpha_max: Vec<f64>,
    pub temporal: TemporalSpec,
    pub n_sites: usize,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ParamLayout {
    pub fn new(
        n_beta: usize,
        alpha_max: Vec<f64>,
        temporal: TemporalSpec,
        n_sites: usize,
    ) -> Self {
        ParamLayout {
            n_beta,
            n_components: alpha_max.len(),
            alpha_max,
            temporal,
            n_sites,
        }
    }

    /// Unconstrained dimension.
    pub fn dim(&self) -> usize {
        self.n_beta + 1 + 2 * self.n_components + self.n_temporal()
    }

    fn n_temporal(&self) -> usize {
        let extra = match self.temporal {
            TemporalSpec::VarSitewise { hierarchical: true } => 2,
            _ => 0,
        };
        self.temporal.n_params(self.n_sites) + extra
    }

    /// Index ranges of the four update blocks in the unconstrained vector.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let p = self.n_beta;
        let nc = self.n_components;
        vec![
            (0, p),                                  // beta
            (p, p + 1 + nc),                         // log sigmas
            (p + 1 + nc, p + 1 + 2 * nc),            // range transforms
            (p + 1 + 2 * nc, self.dim()),            // temporal block
        ]
    }

    /// Map constrained parameters to the unconstrained vector.
    pub fn unconstrain(&self, params: &ParamVector) -> Result<DVector<f64>> {
        if params.beta.len() != self.n_beta
            || params.sigma.len() != self.n_components
            || params.alpha.len() != self.n_components
        {
            return Err(Error::DimensionMismatch(format!(
                "parameter vector does not match layout (beta {}, sigma {}, alpha {})",
                params.beta.len(),
                params.sigma.len(),
                params.alpha.len()
            )));
        }
        let mut u = Vec::with_capacity(self.dim());
        u.extend(params.beta.iter().copied());
        u.push(params.sigma0.ln());
        for s in &params.sigma {
            u.push(s.ln());
        }
        for (a, amax) in params.alpha.iter().zip(&self.alpha_max) {
            u.push(logit(a / amax));
        }
        match (&self.temporal, &params.temporal) {
            (TemporalSpec::Ar, TemporalParams::Ar { phi }) => u.push(phi.atanh()),
            (TemporalSpec::VarSitewise { hierarchical }, TemporalParams::VarSitewise { phi, hyper }) => {
                for p in phi {
                    u.push(p.atanh());
                }
                if *hierarchical {
                    let (mu, sd) = hyper.ok_or_else(|| {
                        Error::ConfigInvalid("hierarchical case 2a needs hyperparameters".into())
                    })?;
                    u.push(mu);
                    u.push(sd.ln());
                }
            }
            (TemporalSpec::VarCovariate { .. }, TemporalParams::VarCovariate { gamma }) => {
                u.extend(gamma.iter().copied());
            }
            (TemporalSpec::Var2nn { .. }, TemporalParams::Var2nn { diag, neighbor }) => {
                for d in diag {
                    u.push(d.atanh());
                }
                for pair in neighbor {
                    u.push(pair[0].atanh());
                    u.push(pair[1].atanh());
                }
            }
            _ => {
                return Err(Error::ConfigInvalid(
                    "temporal parameters do not match the temporal spec".into(),
                ))
            }
        }
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "unconstrained vector has {} entries, layout expects {}",
                u.len(),
                self.dim()
            )));
        }
        Ok(DVector::from_vec(u))
    }

    /// Map an unconstrained vector back, returning the parameters and the
    /// log-Jacobian of the constrained-from-unconstrained map.
    pub fn constrain(&self, u: &DVector<f64>) -> Result<(ParamVector, f64)> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "unconstrained vector has {} entries, layout expects {}",
                u.len(),
                self.dim()
            )));
        }
        let p = self.n_beta;
        let nc = self.n_components;
        let mut jac = 0.0;

        let beta = DVector::from_iterator(p, u.iter().take(p).copied());
        let sigma0 = u[p].exp();
        jac += u[p];
        let mut sigma = Vec::with_capacity(nc);
        for k in 0..nc {
            let v = u[p + 1 + k];
            sigma.push(v.exp());
            jac += v;
        }
        let mut alpha = Vec::with_capacity(nc);
        for k in 0..nc {
            let v = u[p + 1 + nc + k];
            let s = expit(v);
            let a = self.alpha_max[k] * s;
            alpha.push(a);
            // d alpha / dv = alpha_max * s (1 - s)
            jac += (self.alpha_max[k] * s * (1.0 - s)).ln();
        }

        let mut idx = p + 1 + 2 * nc;
        let take_tanh = |idx: &mut usize, jac: &mut f64| {
            let v = u[*idx];
            *idx += 1;
            let phi = v.tanh();
            *jac += (1.0 - phi * phi).ln();
            phi
        };
        let temporal = match &self.temporal {
            TemporalSpec::Ar => TemporalParams::Ar { phi: take_tanh(&mut idx, &mut jac) },
            TemporalSpec::VarSitewise { hierarchical } => {
                let phi: Vec<f64> = (0..self.n_sites).map(|_| take_tanh(&mut idx, &mut jac)).collect();
                let hyper = if *hierarchical {
                    let mu = u[idx];
                    idx += 1;
                    let lsd = u[idx];
                    idx += 1;
                    jac += lsd;
                    Some((mu, lsd.exp()))
                } else {
                    None
                };
                TemporalParams::VarSitewise { phi, hyper }
            }
            TemporalSpec::VarCovariate { n_covariates, .. } => {
                let gamma: Vec<f64> = (0..=*n_covariates)
                    .map(|_| {
                        let v = u[idx];
                        idx += 1;
                        v
                    })
                    .collect();
                TemporalParams::VarCovariate { gamma }
            }
            TemporalSpec::Var2nn { .. } => {
                let diag: Vec<f64> = (0..self.n_sites).map(|_| take_tanh(&mut idx, &mut jac)).collect();
                let neighbor: Vec<[f64; 2]> = (0..self.n_sites)
                    .map(|_| {
                        let a = take_tanh(&mut idx, &mut jac);
                        let b = take_tanh(&mut idx, &mut jac);
                        [a, b]
                    })
                    .collect();
                TemporalParams::Var2nn { diag, neighbor }
            }
        };
        debug_assert_eq!(idx, self.dim());
        Ok((ParamVector { beta, sigma0, sigma, alpha, temporal }, jac))
    }

    /// Human-readable parameter names, aligned with the unconstrained layout
    /// but naming the constrained quantities (draws are reported
    /// constrained).
    pub fn names(&self, beta_names: &[String], component_tags: &[String]) -> Vec<String> {
        let mut names: Vec<String> = beta_names.iter().map(|n| format!("beta[{n}]")).collect();
        names.push("sigma0".into());
        for tag in component_tags {
            names.push(format!("sigma_{tag}"));
        }
        for tag in component_tags {
            names.push(format!("alpha_{tag}"));
        }
        match &self.temporal {
            TemporalSpec::Ar => names.push("phi".into()),
            TemporalSpec::VarSitewise { hierarchical } => {
                for s in 0..self.n_sites {
                    names.push(format!("phi[{s}]"));
                }
                if *hierarchical {
                    names.push("mu_phi".into());
                    names.push("sigma_phi".into());
                }
            }
            TemporalSpec::VarCovariate { n_covariates, .. } => {
                for j in 0..=*n_covariates {
                    names.push(format!("gamma[{j}]"));
                }
            }
            TemporalSpec::Var2nn { .. } => {
                for s in 0..self.n_sites {
                    names.push(format!("phi_diag[{s}]"));
                }
                for s in 0..self.n_sites {
                    names.push(format!("phi_nb[{s},1]"));
                    names.push(format!("phi_nb[{s},2]"));
                }
            }
        }
        names
    }

    /// Inverse of [`ParamLayout::constrained_values`]: parse a stored draw
    /// row back into a parameter set.
    pub fn params_from_constrained(&self, values: &[f64]) -> Result<ParamVector> {
        let p = self.n_beta;
        let nc = self.n_components;
        let expected = p + 1 + 2 * nc
            + self.temporal.n_params(self.n_sites)
            + matches!(self.temporal, TemporalSpec::VarSitewise { hierarchical: true }) as usize * 2;
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "constrained row has {} values, layout expects {expected}",
                values.len()
            )));
        }
        let beta = DVector::from_row_slice(&values[..p]);
        let sigma0 = values[p];
        let sigma = values[p + 1..p + 1 + nc].to_vec();
        let alpha = values[p + 1 + nc..p + 1 + 2 * nc].to_vec();
        let rest = &values[p + 1 + 2 * nc..];
        let temporal = match &self.temporal {
            TemporalSpec::Ar => TemporalParams::Ar { phi: rest[0] },
            TemporalSpec::VarSitewise { hierarchical } => {
                let phi = rest[..self.n_sites].to_vec();
                let hyper = hierarchical.then(|| (rest[self.n_sites], rest[self.n_sites + 1]));
                TemporalParams::VarSitewise { phi, hyper }
            }
            TemporalSpec::VarCovariate { .. } => {
                TemporalParams::VarCovariate { gamma: rest.to_vec() }
            }
            TemporalSpec::Var2nn { .. } => {
                let diag = rest[..self.n_sites].to_vec();
                let neighbor = (0..self.n_sites)
                    .map(|s| [rest[self.n_sites + 2 * s], rest[self.n_sites + 2 * s + 1]])
                    .collect();
                TemporalParams::Var2nn { diag, neighbor }
            }
        };
        Ok(ParamVector { beta, sigma0, sigma, alpha, temporal })
    }

    /// Constrained values in the same order as [`ParamLayout::names`].
    pub fn constrained_values(&self, params: &ParamVector) -> Vec<f64> {
        let mut v: Vec<f64> = params.beta.iter().copied().collect();
        v.push(params.sigma0);
        v.extend(params.sigma.iter().copied());
        v.extend(params.alpha.iter().copied());
        match &params.temporal {
            TemporalParams::Ar { phi } => v.push(*phi),
            TemporalParams::VarSitewise { phi, hyper } => {
                v.extend(phi.iter().copied());
                if let Some((mu, sd)) = hyper {
                    v.push(*mu);
                    v.push(*sd);
                }
            }
            TemporalParams::VarCovariate { gamma } => v.extend(gamma.iter().copied()),
            TemporalParams::Var2nn { diag, neighbor } => {
                v.extend(diag.iter().copied());
                for pair in neighbor {
                    v.extend_from_slice(pair);
                }
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> ParamLayout {
        ParamLayout::new(2, vec![4.0e4, 2.0e4], TemporalSpec::Ar, 5)
    }

    #[test]
    fn round_trip_is_identity() {
        let l = layout();
        let p = ParamVector {
            beta: DVector::from_row_slice(&[-1.0, 2.0]),
            sigma0: 0.3,
            sigma: vec![1.2, 0.7],
            alpha: vec![1.0e4, 900.0],
            temporal: TemporalParams::Ar { phi: 0.6 },
        };
        let u = l.unconstrain(&p).unwrap();
        let (back, _) = l.constrain(&u).unwrap();
        assert!((back.beta[0] - p.beta[0]).abs() < 1e-12);
        assert!((back.sigma0 - p.sigma0).abs() < 1e-12);
        assert!((back.sigma[1] - p.sigma[1]).abs() < 1e-12);
        assert!((back.alpha[0] - p.alpha[0]).abs() < 1e-7);
        assert!((back.temporal.scalar_phi().unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        // Total log-Jacobian = log |det d(constrained)/d(unconstrained)|;
        // the map is coordinatewise so the determinant is a product of the
        // single-coordinate derivatives obtained by central differences.
        let l = layout();
        let u = DVector::from_row_slice(&[0.4, -1.1, -0.7, 0.2, -0.4, 0.3, -1.0, 0.8]);
        let (_, jac) = l.constrain(&u).unwrap();
        let eps = 1e-6;
        let mut fd = 0.0;
        for k in 2..u.len() {
            // skip beta: identity
            let mut up = u.clone();
            let mut dn = u.clone();
            up[k] += eps;
            dn[k] -= eps;
            let (cp, _) = l.constrain(&up).unwrap();
            let (cn, _) = l.constrain(&dn).unwrap();
            let vp = l.constrained_values(&cp)[k];
            let vn = l.constrained_values(&cn)[k];
            fd += ((vp - vn) / (2.0 * eps)).ln();
        }
        assert!((jac - fd).abs() < 1e-6, "jac {jac} vs fd {fd}");
    }

    #[test]
    fn blocks_cover_the_vector() {
        let l = ParamLayout::new(
            3,
            vec![1.0e4],
            TemporalSpec::VarSitewise { hierarchical: true },
            4,
        );
        let blocks = l.blocks();
        assert_eq!(blocks.first().unwrap().0, 0);
        assert_eq!(blocks.last().unwrap().1, l.dim());
        for w in blocks.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        assert_eq!(l.dim(), 3 + 1 + 2 + 4 + 2);
    }

    #[test]
    fn names_align_with_values() {
        let l = ParamLayout::new(1, vec![5.0], TemporalSpec::VarCovariate {
            link: crate::temporal::Link::Logit01,
            n_covariates: 2,
        }, 3);
        let names = l.names(&["intercept".into()], &["ed".into()]);
        assert_eq!(names, vec![
            "beta[intercept]", "sigma0", "sigma_ed", "alpha_ed",
            "gamma[0]", "gamma[1]", "gamma[2]",
        ]);
        let p = ParamVector {
            beta: DVector::from_row_slice(&[0.5]),
            sigma0: 0.1,
            sigma: vec![1.0],
            alpha: vec![2.0],
            temporal: TemporalParams::VarCovariate { gamma: vec![0.0, 1.0, -1.0] },
        };
        assert_eq!(l.constrained_values(&p).len(), names.len());
    }
}
