//! Spatial covariance construction.
//!
//! Nine covariance functions — three forms each for the tail-up, tail-down
//! and Euclidean families — plus the mixture that sums one matrix per
//! family. All forms use the effective-range convention (factor 3 in the
//! exponent). The nugget never enters here: callers add it on the diagonal
//! when forming `Σ + σ₀²I`, so cross covariances between distinct locations
//! stay nugget-free.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::DistanceBundle;

/// Covariance forms valid for the stream (tail-up / tail-down) families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamForm {
    Exponential,
    LinearWithSill,
    Spherical,
}

/// Covariance forms valid for the Euclidean family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EuclidForm {
    Exponential,
    Gaussian,
    Spherical,
}

impl StreamForm {
    pub fn parse(s: &str, family: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(StreamForm::Exponential),
            "linear_with_sill" => Ok(StreamForm::LinearWithSill),
            "spherical" => Ok(StreamForm::Spherical),
            _ => Err(Error::InvalidForm(s.to_string(), family.to_string())),
        }
    }
}

impl EuclidForm {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exponential" => Ok(EuclidForm::Exponential),
            "gaussian" => Ok(EuclidForm::Gaussian),
            "spherical" => Ok(EuclidForm::Spherical),
            _ => Err(Error::InvalidForm(s.to_string(), "euclidean".to_string())),
        }
    }
}

/// One spatial component: family, form, partial sill σ² and range α (meters).
/// The enum layout makes the nine legal (family, form) pairs the only
/// representable ones.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialComponent {
    TailUp { form: StreamForm, sigma2: f64, alpha: f64 },
    TailDown { form: StreamForm, sigma2: f64, alpha: f64 },
    Euclidean { form: EuclidForm, sigma2: f64, alpha: f64 },
}

impl SpatialComponent {
    pub fn sigma2(&self) -> f64 {
        match self {
            SpatialComponent::TailUp { sigma2, .. }
            | SpatialComponent::TailDown { sigma2, .. }
            | SpatialComponent::Euclidean { sigma2, .. } => *sigma2,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            SpatialComponent::TailUp { alpha, .. }
            | SpatialComponent::TailDown { alpha, .. }
            | SpatialComponent::Euclidean { alpha, .. } => *alpha,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            SpatialComponent::TailUp { .. } => "tail_up",
            SpatialComponent::TailDown { .. } => "tail_down",
            SpatialComponent::Euclidean { .. } => "euclidean",
        }
    }

    /// Same component with new (σ², α); used when rebuilding Σ from sampled
    /// parameters.
    pub fn with_params(&self, sigma2: f64, alpha: f64) -> SpatialComponent {
        match self {
            SpatialComponent::TailUp { form, .. } => SpatialComponent::TailUp { form: *form, sigma2, alpha },
            SpatialComponent::TailDown { form, .. } => SpatialComponent::TailDown { form: *form, sigma2, alpha },
            SpatialComponent::Euclidean { form, .. } => SpatialComponent::Euclidean { form: *form, sigma2, alpha },
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma2() > 0.0) || !(self.alpha() > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "{} component needs sigma2 > 0 and alpha > 0 (got {}, {})",
                self.family_name(),
                self.sigma2(),
                self.alpha()
            )));
        }
        Ok(())
    }
}

/// Covariance mixture: 1–3 components with distinct families plus a nugget.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    pub components: Vec<SpatialComponent>,
    /// σ₀², squared response units.
    pub nugget: f64,
}

impl CovarianceSpec {
    pub fn new(components: Vec<SpatialComponent>, nugget: f64) -> Result<Self> {
        if components.is_empty() || components.len() > 3 {
            return Err(Error::ConfigInvalid(format!(
                "covariance mixture needs 1-3 components, got {}",
                components.len()
            )));
        }
        for (i, a) in components.iter().enumerate() {
            a.validate()?;
            for b in components.iter().skip(i + 1) {
                if a.family_name() == b.family_name() {
                    return Err(Error::ConfigInvalid(format!(
                        "duplicate {} component in covariance mixture",
                        a.family_name()
                    )));
                }
            }
        }
        if nugget < 0.0 {
            return Err(Error::ConfigInvalid(format!("negative nugget {nugget}")));
        }
        Ok(CovarianceSpec { components, nugget })
    }

    /// Σ sigma2 + nugget.
    pub fn total_sill(&self) -> f64 {
        self.components.iter().map(|c| c.sigma2()).sum::<f64>() + self.nugget
    }
}

fn unweighted_stream(form: StreamForm, sigma2: f64, alpha: f64, h: f64) -> f64 {
    match form {
        StreamForm::Exponential => sigma2 * (-3.0 * h / alpha).exp(),
        StreamForm::LinearWithSill => {
            if h / alpha <= 1.0 {
                sigma2 * (1.0 - h / alpha)
            } else {
                0.0
            }
        }
        StreamForm::Spherical => {
            if h / alpha <= 1.0 {
                sigma2 * (1.0 - 1.5 * h / alpha + 0.5 * (h / alpha).powi(3))
            } else {
                0.0
            }
        }
    }
}

/// Tail-down value for a flow-unconnected pair with junction distances a <= b.
///
/// The spherical case uses the b/(2α) middle term of the printed piecewise
/// definition; a correction to b³/(2α³) would be a one-line change here.
fn taildown_unconnected(form: StreamForm, sigma2: f64, alpha: f64, a: f64, b: f64) -> f64 {
    match form {
        StreamForm::Exponential => sigma2 * (-3.0 * (a + b) / alpha).exp(),
        StreamForm::LinearWithSill => {
            if b / alpha <= 1.0 {
                sigma2 * (1.0 - b / alpha)
            } else {
                0.0
            }
        }
        StreamForm::Spherical => {
            if b / alpha <= 1.0 {
                sigma2 * (1.0 - 1.5 * a / alpha + 0.5 * b / alpha) * (1.0 - b / alpha)
            } else {
                0.0
            }
        }
    }
}

/// Euclidean covariance matrix from a distance matrix.
pub fn cov_euclidean(d: &DMatrix<f64>, form: EuclidForm, sigma2: f64, alpha: f64) -> DMatrix<f64> {
    d.map(|dist| match form {
        EuclidForm::Exponential => sigma2 * (-3.0 * dist / alpha).exp(),
        EuclidForm::Gaussian => sigma2 * (-3.0 * (dist / alpha).powi(2)).exp(),
        EuclidForm::Spherical => {
            if dist / alpha <= 1.0 {
                sigma2 * (1.0 - 1.5 * dist / alpha + 0.5 * (dist / alpha).powi(3))
            } else {
                0.0
            }
        }
    })
}

/// Tail-up covariance: `C_u(h) * W_ij` on flow-connected pairs, 0 elsewhere.
/// Accepts rectangular inputs for observation-by-prediction blocks.
pub fn cov_tailup(
    h: &DMatrix<f64>,
    flow_conn: &DMatrix<bool>,
    w: &DMatrix<f64>,
    form: StreamForm,
    sigma2: f64,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    if flow_conn.shape() != h.shape() || w.shape() != h.shape() {
        return Err(Error::DimensionMismatch(format!(
            "tail-up inputs: H {:?}, flow_conn {:?}, W {:?}",
            h.shape(),
            flow_conn.shape(),
            w.shape()
        )));
    }
    let mut out = DMatrix::zeros(h.nrows(), h.ncols());
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            if flow_conn[(i, j)] {
                out[(i, j)] = unweighted_stream(form, sigma2, alpha, h[(i, j)]) * w[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Tail-down covariance: `h` on flow-connected pairs, `(a, b)` on
/// flow-unconnected ones.
pub fn cov_taildown(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    flow_conn: &DMatrix<bool>,
    form: StreamForm,
    sigma2: f64,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let s = h.nrows();
    if a.shape() != h.shape() || b.shape() != h.shape() || flow_conn.shape() != h.shape() {
        return Err(Error::DimensionMismatch(format!(
            "tail-down inputs: H {:?}, A {:?}, B {:?}",
            h.shape(),
            a.shape(),
            b.shape()
        )));
    }
    let mut out = DMatrix::zeros(s, h.ncols());
    for j in 0..h.ncols() {
        for i in 0..s {
            out[(i, j)] = if flow_conn[(i, j)] {
                unweighted_stream(form, sigma2, alpha, h[(i, j)])
            } else {
                taildown_unconnected(form, sigma2, alpha, a[(i, j)], b[(i, j)])
            };
        }
    }
    Ok(out)
}

fn component_matrix(c: &SpatialComponent, bundle: &DistanceBundle) -> Result<DMatrix<f64>> {
    match c {
        SpatialComponent::Euclidean { form, sigma2, alpha } => {
            Ok(cov_euclidean(&bundle.d, *form, *sigma2, *alpha))
        }
        SpatialComponent::TailUp { form, sigma2, alpha } => {
            if !bundle.has_network {
                return Err(Error::NetworkRequired);
            }
            cov_tailup(&bundle.h, &bundle.flow_conn, &bundle.w, *form, *sigma2, *alpha)
        }
        SpatialComponent::TailDown { form, sigma2, alpha } => {
            if !bundle.has_network {
                return Err(Error::NetworkRequired);
            }
            cov_taildown(
                &bundle.h,
                &bundle.a,
                &bundle.b,
                &bundle.flow_conn,
                *form,
                *sigma2,
                *alpha,
            )
        }
    }
}

/// Σ = sum of the component matrices. The nugget is *not* added here.
pub fn cov_mixture(components: &[SpatialComponent], bundle: &DistanceBundle) -> Result<DMatrix<f64>> {
    let s = bundle.n_sites();
    let mut sum = DMatrix::zeros(s, s);
    for c in components {
        sum += component_matrix(c, bundle)?;
    }
    Ok(sum)
}

/// Retry policy for Cholesky factorization of near-PSD matrices.
#[derive(Debug, Clone, Copy)]
pub struct JitterPolicy {
    /// First retry adds `initial_rel * mean(diagonal)` to the diagonal.
    pub initial_rel: f64,
    /// Each escalation multiplies the jitter by this factor.
    pub growth: f64,
    /// Escalations after the first retry.
    pub max_escalations: usize,
}

impl Default for JitterPolicy {
    fn default() -> Self {
        JitterPolicy {
            initial_rel: 1e-10,
            growth: 10.0,
            max_escalations: 3,
        }
    }
}

/// Lower-triangular Cholesky factor plus the diagonal jitter that was needed
/// to obtain it (0 when the matrix factored cleanly).
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl SpdFactor {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Solve `M x = rhs` for each column of `rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_vec(&self, rhs: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        self.chol.solve(rhs)
    }

    /// log det(M) via the factor diagonal.
    pub fn log_det(&self) -> f64 {
        2.0 * self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
    }

    /// Solve `L' x = z` (back substitution); with M = L L' a precision
    /// matrix, the result is N(0, M⁻¹) when z is standard normal.
    pub fn solve_lt_transpose(&self, z: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let l = self.chol.l_dirty();
        let n = z.len();
        let mut x = nalgebra::DVector::zeros(n);
        for i in (0..n).rev() {
            let mut acc = z[i];
            for j in (i + 1)..n {
                acc -= l[(j, i)] * x[j];
            }
            x[i] = acc / l[(i, i)];
        }
        x
    }

    /// `L z` for sampling correlated Gaussians.
    pub fn l_mul(&self, z: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let l = self.chol.l_dirty();
        let n = z.len();
        let mut out = nalgebra::DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            out[i] = acc;
        }
        out
    }
}

/// Cholesky-factor a symmetric matrix, escalating diagonal jitter on failure.
pub fn assert_psd(matrix: &DMatrix<f64>, policy: &JitterPolicy) -> Result<SpdFactor> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "assert_psd needs a square matrix, got {:?}",
            matrix.shape()
        )));
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok(SpdFactor { chol, jitter: 0.0 });
    }
    let mean_diag = matrix.diagonal().mean();
    let mut jitter = policy.initial_rel * mean_diag.max(f64::MIN_POSITIVE);
    for _ in 0..=policy.max_escalations {
        let mut jittered = matrix.clone();
        for i in 0..matrix.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(jittered) {
            return Ok(SpdFactor { chol, jitter });
        }
        jitter *= policy.growth;
    }
    Err(Error::NotPositiveDefinite(jitter / policy.growth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Site, StreamNetwork, Weighting};

    fn dist2(entries: [[f64; 2]; 2]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[entries[0][0], entries[0][1], entries[1][0], entries[1][1]])
    }

    #[test]
    fn euclidean_zero_distance_gives_sill() {
        let d = dist2([[0.0, 10.0], [10.0, 0.0]]);
        for form in [EuclidForm::Exponential, EuclidForm::Gaussian, EuclidForm::Spherical] {
            let c = cov_euclidean(&d, form, 2.5, 100.0);
            assert_eq!(c[(0, 0)], 2.5);
            assert_eq!(c[(1, 1)], 2.5);
        }
    }

    #[test]
    fn euclidean_exponential_at_range() {
        let d = dist2([[0.0, 50.0], [50.0, 0.0]]);
        let c = cov_euclidean(&d, EuclidForm::Exponential, 1.0, 50.0);
        assert!((c[(0, 1)] - (-3.0f64).exp()).abs() < 1e-12);
        assert!((c[(0, 1)] - 0.049787).abs() < 1e-6);
    }

    #[test]
    fn euclidean_spherical_cutoff() {
        let d = dist2([[0.0, 80.0], [80.0, 0.0]]);
        let c = cov_euclidean(&d, EuclidForm::Spherical, 3.0, 50.0);
        assert_eq!(c[(0, 1)], 0.0);
    }

    #[test]
    fn gaussian_form_closed_value() {
        let d = dist2([[0.0, 25.0], [25.0, 0.0]]);
        let c = cov_euclidean(&d, EuclidForm::Gaussian, 2.0, 50.0);
        assert!((c[(0, 1)] - 2.0 * (-0.75f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn tailup_unconnected_is_zero() {
        let h = dist2([[0.0, 700.0], [700.0, 0.0]]);
        let fc = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        let w = dist2([[1.0, 0.0], [0.0, 1.0]]);
        let c = cov_tailup(&h, &fc, &w, StreamForm::Exponential, 2.0, 1e4).unwrap();
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(0, 0)], 2.0);
    }

    #[test]
    fn tailup_self_covariance_is_sill() {
        let h = dist2([[0.0, 0.0], [0.0, 0.0]]);
        let fc = DMatrix::from_element(2, 2, true);
        let w = DMatrix::from_element(2, 2, 1.0);
        for form in [StreamForm::Exponential, StreamForm::LinearWithSill, StreamForm::Spherical] {
            let c = cov_tailup(&h, &fc, &w, form, 3.0, 10.0).unwrap();
            assert_eq!(c[(0, 1)], 3.0);
        }
    }

    /// Composes the worked network's distance and weight for pair (s1, s3)
    /// with the exponential closed form.
    #[test]
    fn tailup_on_worked_network() {
        let mut net = StreamNetwork::build(
            crate::network::fixtures::fig1_segments(),
            crate::network::fixtures::fig1_sites(),
        )
        .unwrap();
        net.compute_afv(&Weighting::WatershedArea).unwrap();
        let bundle = net.distance_bundle().unwrap();
        let c = cov_tailup(
            &bundle.h,
            &bundle.flow_conn,
            &bundle.w,
            StreamForm::Exponential,
            2.0,
            1e4,
        )
        .unwrap();
        // h(s1,s3) = 600 from the site geometry, w13 = sqrt(afv1/afv3).
        let w13 = bundle.w[(0, 2)];
        let expect = 2.0 * (-3.0_f64 * 600.0 / 1e4).exp() * w13;
        assert!((c[(0, 2)] - expect).abs() < 1e-12);
        assert!((w13 - 0.820).abs() < 5e-4);
    }

    #[test]
    fn taildown_linear_cutoff_unconnected() {
        let h = dist2([[0.0, 30.0], [30.0, 0.0]]);
        let a = dist2([[0.0, 10.0], [10.0, 0.0]]);
        let b = dist2([[0.0, 20.0], [20.0, 0.0]]);
        let fc = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        let c = cov_taildown(&h, &a, &b, &fc, StreamForm::LinearWithSill, 1.0, 15.0).unwrap();
        assert_eq!(c[(0, 1)], 0.0); // b = 20 > alpha = 15
    }

    #[test]
    fn taildown_exponential_depends_on_a_plus_b_only() {
        let h = dist2([[0.0, 30.0], [30.0, 0.0]]);
        let fc = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        let a1 = dist2([[0.0, 10.0], [10.0, 0.0]]);
        let b1 = dist2([[0.0, 20.0], [20.0, 0.0]]);
        let a2 = dist2([[0.0, 5.0], [5.0, 0.0]]);
        let b2 = dist2([[0.0, 25.0], [25.0, 0.0]]);
        let c1 = cov_taildown(&h, &a1, &b1, &fc, StreamForm::Exponential, 1.3, 40.0).unwrap();
        let c2 = cov_taildown(&h, &a2, &b2, &fc, StreamForm::Exponential, 1.3, 40.0).unwrap();
        assert_eq!(c1[(0, 1)], c2[(0, 1)]);
    }

    /// Hand evaluation of the printed formula, cross-checked by an
    /// independent scalar path: a = b = α/2 gives (1 - 3/4 + 1/4)(1 - 1/2).
    #[test]
    fn taildown_spherical_hand_value() {
        let alpha = 8.0;
        let h = dist2([[0.0, 8.0], [8.0, 0.0]]);
        let a = dist2([[0.0, 4.0], [4.0, 0.0]]);
        let b = dist2([[0.0, 4.0], [4.0, 0.0]]);
        let fc = DMatrix::from_row_slice(2, 2, &[true, false, false, true]);
        let c = cov_taildown(&h, &a, &b, &fc, StreamForm::Spherical, 1.0, alpha).unwrap();
        assert!((c[(0, 1)] - 0.25).abs() < 1e-15);
        // Independent scalar evaluation of the same printed expression.
        let (av, bv) = (4.0 / alpha, 4.0 / alpha);
        let scalar = (1.0 - 3.0 * av / 2.0 + bv / 2.0) * (1.0 - bv);
        assert_eq!(c[(0, 1)], scalar);
    }

    #[test]
    fn mixture_singleton_equals_component() {
        let sites: Vec<Site> = (0..3)
            .map(|k| Site { site_id: k, segment_id: 0, updist: 0.0, x: k as f64 * 10.0, y: 0.0 })
            .collect();
        let bundle = DistanceBundle::from_coordinates(&sites);
        let comp = SpatialComponent::Euclidean { form: EuclidForm::Exponential, sigma2: 1.7, alpha: 30.0 };
        let mix = cov_mixture(std::slice::from_ref(&comp), &bundle).unwrap();
        let direct = cov_euclidean(&bundle.d, EuclidForm::Exponential, 1.7, 30.0);
        assert_eq!(mix, direct);
    }

    #[test]
    fn mixture_diagonal_adds_sills() {
        let mut net = StreamNetwork::build(
            crate::network::fixtures::fig1_segments(),
            crate::network::fixtures::fig1_sites(),
        )
        .unwrap();
        net.compute_afv(&Weighting::WatershedArea).unwrap();
        let bundle = net.distance_bundle().unwrap();
        let comps = vec![
            SpatialComponent::TailUp { form: StreamForm::Exponential, sigma2: 1.0, alpha: 1e4 },
            SpatialComponent::TailDown { form: StreamForm::Exponential, sigma2: 2.0, alpha: 1e4 },
        ];
        let mix = cov_mixture(&comps, &bundle).unwrap();
        for i in 0..4 {
            assert!((mix[(i, i)] - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_recomposes_from_component_calls() {
        let mut net = StreamNetwork::build(
            crate::network::fixtures::fig1_segments(),
            crate::network::fixtures::fig1_sites(),
        )
        .unwrap();
        net.compute_afv(&Weighting::WatershedArea).unwrap();
        let bundle = net.distance_bundle().unwrap();
        let comps = vec![
            SpatialComponent::TailUp { form: StreamForm::Spherical, sigma2: 0.8, alpha: 9e3 },
            SpatialComponent::TailDown { form: StreamForm::LinearWithSill, sigma2: 1.1, alpha: 2e4 },
            SpatialComponent::Euclidean { form: EuclidForm::Gaussian, sigma2: 0.4, alpha: 5e3 },
        ];
        let mix = cov_mixture(&comps, &bundle).unwrap();
        let sum = cov_tailup(&bundle.h, &bundle.flow_conn, &bundle.w, StreamForm::Spherical, 0.8, 9e3).unwrap()
            + cov_taildown(&bundle.h, &bundle.a, &bundle.b, &bundle.flow_conn, StreamForm::LinearWithSill, 1.1, 2e4).unwrap()
            + cov_euclidean(&bundle.d, EuclidForm::Gaussian, 0.4, 5e3);
        assert_eq!(mix, sum);
    }

    #[test]
    fn tail_component_rejects_coordinate_bundle() {
        let sites = vec![Site { site_id: 0, segment_id: 0, updist: 0.0, x: 0.0, y: 0.0 }];
        let bundle = DistanceBundle::from_coordinates(&sites);
        let comp = SpatialComponent::TailUp { form: StreamForm::Exponential, sigma2: 1.0, alpha: 1.0 };
        assert!(matches!(
            cov_mixture(std::slice::from_ref(&comp), &bundle),
            Err(Error::NetworkRequired)
        ));
    }

    #[test]
    fn psd_identity_factors_cleanly() {
        let m = DMatrix::<f64>::identity(4, 4);
        let f = assert_psd(&m, &JitterPolicy::default()).unwrap();
        assert_eq!(f.jitter, 0.0);
        assert!((f.l() - DMatrix::identity(4, 4)).abs().max() < 1e-15);
    }

    #[test]
    fn psd_indefinite_matrix_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            assert_psd(&m, &JitterPolicy::default()),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn psd_singular_matrix_needs_jitter() {
        // Rank-1, exactly singular: clean factorization fails, jitter fixes it.
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = assert_psd(&m, &JitterPolicy::default()).unwrap();
        assert!(f.jitter > 0.0);
    }

    /// PSD over random mixtures: Σ + σ₀²I factors without jitter.
    #[test]
    fn psd_property_over_random_specs() {
        let mut state = 7u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let n = 3 + (next() * 10.0) as usize;
            let sites: Vec<Site> = (0..n)
                .map(|k| Site {
                    site_id: k as i64,
                    segment_id: 0,
                    updist: 0.0,
                    x: next() * 1e4,
                    y: next() * 1e4,
                })
                .collect();
            let bundle = DistanceBundle::from_coordinates(&sites);
            let form = match (next() * 3.0) as usize {
                0 => EuclidForm::Exponential,
                1 => EuclidForm::Gaussian,
                _ => EuclidForm::Spherical,
            };
            let comp = SpatialComponent::Euclidean {
                form,
                sigma2: 0.1 + next() * 5.0,
                alpha: 100.0 + next() * 2e4,
            };
            let mut v = cov_mixture(std::slice::from_ref(&comp), &bundle).unwrap();
            let nugget = 1e-8 + next();
            for i in 0..n {
                v[(i, i)] += nugget;
            }
            let f = assert_psd(&v, &JitterPolicy::default()).unwrap();
            assert_eq!(f.jitter, 0.0);
        }
    }

    /// The tail-up zero pattern must be exactly the complement of the
    /// flow-connectivity mask.
    #[test]
    fn tailup_zero_pattern_is_flow_mask_complement() {
        let mut net = StreamNetwork::build(
            crate::network::fixtures::fig1_segments(),
            crate::network::fixtures::fig1_sites(),
        )
        .unwrap();
        net.compute_afv(&Weighting::WatershedArea).unwrap();
        let bundle = net.distance_bundle().unwrap();
        for form in [StreamForm::Exponential, StreamForm::LinearWithSill, StreamForm::Spherical] {
            let c = cov_tailup(&bundle.h, &bundle.flow_conn, &bundle.w, form, 1.5, 5e4).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    if bundle.flow_conn[(i, j)] {
                        assert!(c[(i, j)] > 0.0, "({i},{j}) {form:?}");
                    } else {
                        assert_eq!(c[(i, j)], 0.0, "({i},{j}) {form:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn covariances_nonincreasing_in_distance() {
        let grid: Vec<f64> = (0..200).map(|k| k as f64 * 37.0).collect();
        let alpha = 3200.0;
        let check = |vals: Vec<f64>| {
            for w in vals.windows(2) {
                assert!(w[1] <= w[0] + 1e-14);
            }
        };
        for form in [EuclidForm::Exponential, EuclidForm::Gaussian, EuclidForm::Spherical] {
            check(
                grid.iter()
                    .map(|&d| cov_euclidean(&DMatrix::from_element(1, 1, d), form, 1.4, alpha)[(0, 0)])
                    .collect(),
            );
        }
        for form in [StreamForm::Exponential, StreamForm::LinearWithSill, StreamForm::Spherical] {
            check(grid.iter().map(|&h| unweighted_stream(form, 1.4, alpha, h)).collect());
        }
    }

    #[test]
    fn scale_equivariance_in_sigma2() {
        let sites: Vec<Site> = (0..5)
            .map(|k| Site { site_id: k, segment_id: 0, updist: 0.0, x: k as f64 * 313.0, y: 100.0 })
            .collect();
        let bundle = DistanceBundle::from_coordinates(&sites);
        let c1 = cov_euclidean(&bundle.d, EuclidForm::Exponential, 1.0, 900.0);
        let c3 = cov_euclidean(&bundle.d, EuclidForm::Exponential, 3.0, 900.0);
        assert!((&c1 * 3.0 - c3).abs().max() < 1e-12);
    }

    #[test]
    fn invalid_form_string_rejected() {
        assert!(matches!(
            StreamForm::parse("cauchy", "tail_up"),
            Err(Error::InvalidForm(_, _))
        ));
        assert!(EuclidForm::parse("gaussian").is_ok());
        // linear_with_sill is only legal for the stream families
        assert!(matches!(
            EuclidForm::parse("linear_with_sill"),
            Err(Error::InvalidForm(_, _))
        ));
    }
}
