//! Exact Gaussian imputation of missing response slices.
//!
//! The VAR(1) density places slice t in at most two factors of the joint:
//! its own conditional and the one for slice t+1. The full conditional of
//! y_t given everything else is therefore Gaussian with precision
//! `V_t⁻¹ + Φ'V⁻¹Φ` (the second term absent at t = T), where V_t is κV at
//! t = 1 and V otherwise. Conditioning that Gaussian on the observed
//! entries of the slice gives the exact Gibbs update for the missing ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::kernels::{assert_psd, JitterPolicy, SpdFactor};

/// Per-iteration quantities shared by all slice updates.
pub struct ImputationOp {
    /// V⁻¹ (dense; S is small enough that the explicit inverse is cheap).
    v_inv: DMatrix<f64>,
    /// Φ' V⁻¹
    phit_vinv: DMatrix<f64>,
    /// Φ' V⁻¹ Φ
    phit_vinv_phi: DMatrix<f64>,
    phi: DMatrix<f64>,
    kappa: f64,
    jitter: JitterPolicy,
}

/// Full conditional of one slice's missing entries.
pub struct SliceConditional {
    /// Site indices of the missing entries within the slice.
    pub missing: Vec<usize>,
    pub mean: DVector<f64>,
    /// Cholesky factor of the conditional *precision*.
    pub precision: SpdFactor,
}

impl SliceConditional {
    /// Draw one sample of the missing entries.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.missing.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.precision.solve_lt_transpose(&z)
    }

    /// Marginal standard deviations (diagonal of the precision inverse).
    pub fn marginal_sd(&self) -> DVector<f64> {
        let m = self.missing.len();
        let cov = self.precision.solve(&DMatrix::identity(m, m));
        DVector::from_fn(m, |i, _| cov[(i, i)].sqrt())
    }
}

impl ImputationOp {
    pub fn new(v_factor: &SpdFactor, phi: DMatrix<f64>, kappa: f64) -> Self {
        let s = v_factor.dim();
        let v_inv = v_factor.solve(&DMatrix::identity(s, s));
        let phit_vinv = phi.transpose() * &v_inv;
        let phit_vinv_phi = &phit_vinv * &phi;
        ImputationOp {
            v_inv,
            phit_vinv,
            phit_vinv_phi,
            phi,
            kappa,
            jitter: JitterPolicy::default(),
        }
    }

    /// Conditional of slice t's missing entries given the current values of
    /// every other cell. `resid` holds r_u = y_u − X_u β per slice; `observed`
    /// flags the slice's observed cells. Returns None when nothing is missing.
    pub fn slice_conditional(
        &self,
        t: usize,
        t_len: usize,
        resid: &[DVector<f64>],
        x_beta_t: &DVector<f64>,
        y_t: &DVector<f64>,
        observed_t: &[bool],
    ) -> Result<Option<SliceConditional>> {
        let s = y_t.len();
        let missing: Vec<usize> = (0..s).filter(|&i| !observed_t[i]).collect();
        if missing.is_empty() {
            return Ok(None);
        }

        // Precision of the slice's full conditional in residual space.
        let own_prec = if t == 0 {
            &self.v_inv / self.kappa
        } else {
            self.v_inv.clone()
        };
        let prec = if t + 1 < t_len {
            &own_prec + &self.phit_vinv_phi
        } else {
            own_prec.clone()
        };

        // Linear coefficient c so that prec * mu_r = c.
        let mut c = DVector::zeros(s);
        if t > 0 {
            c += &own_prec * (&self.phi * &resid[t - 1]);
        }
        if t + 1 < t_len {
            c += &self.phit_vinv * &resid[t + 1];
        }
        let full_factor = assert_psd(&prec, &self.jitter)?;
        let mu_r = full_factor.solve_vec(&c);
        let mean_full = x_beta_t + mu_r;

        // Condition the joint Gaussian on the observed entries: precision of
        // the missing block is P_MM; mean shifts by -P_MM⁻¹ P_MO (y_O - m_O).
        let m = missing.len();
        let observed_idx: Vec<usize> = (0..s).filter(|&i| observed_t[i]).collect();
        let p_mm = DMatrix::from_fn(m, m, |i, j| prec[(missing[i], missing[j])]);
        let factor = assert_psd(&p_mm, &self.jitter)?;
        let mean = if observed_idx.is_empty() {
            DVector::from_fn(m, |i, _| mean_full[missing[i]])
        } else {
            let mut shift = DVector::zeros(m);
            for (i, &mi) in missing.iter().enumerate() {
                let mut acc = 0.0;
                for &oj in &observed_idx {
                    acc += prec[(mi, oj)] * (y_t[oj] - mean_full[oj]);
                }
                shift[i] = acc;
            }
            let corr = factor.solve_vec(&shift);
            DVector::from_fn(m, |i, _| mean_full[missing[i]]) - corr
        };
        Ok(Some(SliceConditional { missing, mean, precision: factor }))
    }
}

/// Gibbs-update every slice's missing entries in place.
///
/// `y` is the working (complete) response; `x_beta[t]` = X_t β.
pub fn impute_all_slices<R: Rng>(
    op: &ImputationOp,
    y: &mut DMatrix<f64>,
    x_beta: &[DVector<f64>],
    observed: &DMatrix<bool>,
    rng: &mut R,
) -> Result<()> {
    let (s, t_len) = y.shape();
    for t in 0..t_len {
        let observed_t: Vec<bool> = (0..s).map(|i| observed[(i, t)]).collect();
        if observed_t.iter().all(|&o| o) {
            continue;
        }
        // Residuals reflect the freshest imputations of neighbouring slices.
        let resid: Vec<DVector<f64>> = (0..t_len)
            .map(|u| DVector::from_fn(s, |i, _| y[(i, u)] - x_beta[u][i]))
            .collect();
        let y_t = DVector::from_fn(s, |i, _| y[(i, t)]);
        if let Some(cond) = op.slice_conditional(t, t_len, &resid, &x_beta[t], &y_t, &observed_t)? {
            let draw = cond.sample(rng);
            for (k, &site) in cond.missing.iter().enumerate() {
                y[(site, t)] = draw[k];
            }
        }
    }
    Ok(())
}
