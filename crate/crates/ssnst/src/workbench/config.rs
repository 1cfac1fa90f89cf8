//! Run configuration: one JSON file describing paths, the model, priors,
//! MCMC settings, the prediction task, the holdout split, and (optionally)
//! a simulation scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{EuclidForm, SpatialComponent, StreamForm};
use crate::model::{Formula, Term};
use crate::network::Weighting;
use crate::sampler::McmcConfig;
use crate::temporal::{Link, NeighborMode, TemporalSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Paths {
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default)]
    pub sites: Option<PathBuf>,
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default)]
    pub prediction_sites: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub family: String,
    pub form: String,
    /// Simulation truth / template values; ignored by the sampler.
    #[serde(default = "one")]
    pub sigma2: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

impl ComponentConfig {
    pub fn build(&self) -> Result<SpatialComponent> {
        match self.family.as_str() {
            "tail_up" => Ok(SpatialComponent::TailUp {
                form: StreamForm::parse(&self.form, "tail_up")?,
                sigma2: self.sigma2,
                alpha: self.alpha,
            }),
            "tail_down" => Ok(SpatialComponent::TailDown {
                form: StreamForm::parse(&self.form, "tail_down")?,
                sigma2: self.sigma2,
                alpha: self.alpha,
            }),
            "euclidean" => Ok(SpatialComponent::Euclidean {
                form: EuclidForm::parse(&self.form)?,
                sigma2: self.sigma2,
                alpha: self.alpha,
            }),
            other => Err(Error::InvalidForm(self.form.clone(), other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum TemporalConfig {
    Ar {
        /// Simulation truth; ignored by the sampler.
        #[serde(default)]
        phi: Option<f64>,
    },
    VarSitewise {
        #[serde(default)]
        hierarchical: bool,
        #[serde(default)]
        phi: Option<Vec<f64>>,
    },
    VarCovariate {
        #[serde(default = "default_link")]
        link: Link,
        covariates: Vec<String>,
        #[serde(default)]
        gamma: Option<Vec<f64>>,
    },
    #[serde(rename = "var_2nn")]
    Var2nn {
        #[serde(default = "default_neighbor_mode")]
        neighbor_mode: NeighborMode,
        #[serde(default)]
        diag: Option<f64>,
        #[serde(default)]
        offdiag: Option<f64>,
    },
}

fn default_link() -> Link {
    Link::Logit01
}

fn default_neighbor_mode() -> NeighborMode {
    NeighborMode::TwoNearest
}

impl TemporalConfig {
    pub fn spec(&self) -> TemporalSpec {
        match self {
            TemporalConfig::Ar { .. } => TemporalSpec::Ar,
            TemporalConfig::VarSitewise { hierarchical, .. } => {
                TemporalSpec::VarSitewise { hierarchical: *hierarchical }
            }
            TemporalConfig::VarCovariate { link, covariates, .. } => TemporalSpec::VarCovariate {
                link: *link,
                n_covariates: covariates.len(),
            },
            TemporalConfig::Var2nn { neighbor_mode, .. } => {
                TemporalSpec::Var2nn { neighbor_mode: *neighbor_mode }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingConfig {
    WatershedArea,
    Equal,
    /// Per-segment additive variable supplied inline, aligned with the
    /// network file's segment order.
    Custom(Vec<f64>),
    /// Name of a numeric per-segment column of the network file
    /// (length, seg_contrib_area or watershed_area).
    CustomColumn(String),
}

impl Default for WeightingConfig {
    fn default() -> Self {
        WeightingConfig::WatershedArea
    }
}

impl WeightingConfig {
    pub fn build(&self, segments: &[crate::network::Segment]) -> Result<Weighting> {
        Ok(match self {
            WeightingConfig::WatershedArea => Weighting::WatershedArea,
            WeightingConfig::Equal => Weighting::Equal,
            WeightingConfig::Custom(v) => Weighting::Custom(v.clone()),
            WeightingConfig::CustomColumn(name) => {
                let extract: fn(&crate::network::Segment) -> f64 = match name.as_str() {
                    "length" => |s| s.length,
                    "seg_contrib_area" => |s| s.seg_contrib_area,
                    "watershed_area" => |s| s.watershed_area,
                    _ => return Err(Error::UnknownColumn(name.clone())),
                };
                Weighting::Custom(segments.iter().map(extract).collect())
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub components: Vec<ComponentConfig>,
    pub temporal: TemporalConfig,
    /// Covariate column names entering the fixed effects; the intercept is
    /// implicit.
    #[serde(default)]
    pub formula: Vec<String>,
    #[serde(default)]
    pub fourier_m: Option<f64>,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub weighting: WeightingConfig,
    /// "var" (default) or "separable".
    #[serde(default)]
    pub method: Option<String>,
}

impl ModelConfig {
    pub fn formula(&self) -> Formula {
        let mut terms: Vec<Term> = self.formula.iter().map(|c| Term::Column(c.clone())).collect();
        if let Some(m) = self.fourier_m {
            terms.push(Term::Fourier(m));
        }
        Formula { terms, standardize: self.standardize }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiPriorConfig {
    Uniform,
    TruncNormal { mean: f64, sd: f64 },
    Hierarchical { mu_mean: f64, mu_sd: f64, sigma_bound: f64 },
    GammaNormal { sd: f64 },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PriorOverrides {
    #[serde(default)]
    pub beta_sd: Option<f64>,
    #[serde(default)]
    pub sigma0_bound: Option<f64>,
    #[serde(default)]
    pub sigma_bound: Option<f64>,
    #[serde(default)]
    pub alpha_max: Option<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<PhiPriorConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McmcSettings {
    #[serde(default = "d_chains")]
    pub chains: usize,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    #[serde(default = "d_warmup")]
    pub warmup: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_accept")]
    pub target_accept: f64,
    #[serde(default = "d_thin")]
    pub thin: usize,
    #[serde(default = "d_scale")]
    pub initial_scale: f64,
    #[serde(default = "d_ckpt")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub resume: bool,
}

fn d_chains() -> usize { 4 }
fn d_iters() -> usize { 3000 }
fn d_warmup() -> usize { 1500 }
fn d_seed() -> u64 { 1 }
fn d_accept() -> f64 { 0.234 }
fn d_thin() -> usize { 1 }
fn d_scale() -> f64 { 0.1 }
fn d_ckpt() -> usize { 500 }

impl Default for McmcSettings {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

impl McmcSettings {
    pub fn build(&self, checkpoint_dir: Option<PathBuf>) -> McmcConfig {
        McmcConfig {
            chains: self.chains,
            iterations: self.iterations,
            warmup: self.warmup,
            seed: self.seed,
            target_accept: self.target_accept,
            thin: self.thin,
            initial_scale: self.initial_scale,
            blocks: Default::default(),
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir,
            resume: self.resume,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionSettings {
    #[serde(default = "d_subsample")]
    pub draw_subsample: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default = "d_mass")]
    pub hdi_mass: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Force the recursion route even for scalar-φ fits.
    #[serde(default)]
    pub use_recursion: bool,
}

fn d_subsample() -> usize { 1000 }
fn d_batch() -> usize { 500 }
fn d_mass() -> f64 { 0.95 }

impl Default for PredictionSettings {
    fn default() -> Self {
        serde_json::from_str("{}").unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldoutConfig {
    #[serde(default)]
    pub fraction: f64,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig { fraction: 0.0, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologyConfig {
    /// Uniform-attachment random tree with one site per segment.
    RandomTree { n: usize, seed: u64 },
    /// √n × √n regular grid on the unit square, no stream network.
    GridEuclidean { n: usize },
    /// Use the files named under `paths`.
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MissingnessConfig {
    /// Independent missingness probability per cell on non-block sites.
    #[serde(default)]
    pub random_p: f64,
    /// Number of sites whose whole series is held out.
    #[serde(default)]
    pub block_sites: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

impl Default for MissingnessConfig {
    fn default() -> Self {
        MissingnessConfig { random_p: 0.0, block_sites: 0, seed: 1 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub components: Vec<ComponentConfig>,
    pub temporal: TemporalConfig,
    /// True regression coefficients; the first is the intercept.
    pub beta: Vec<f64>,
    /// σ₀ on the standard-deviation scale.
    #[serde(default)]
    pub nugget_sd: f64,
    /// Number of iid N(0,1) covariate columns to generate (x1, x2, ...).
    #[serde(default)]
    pub n_covariates: usize,
    /// Multiplies site coordinates after topology generation; fixes the
    /// ratio of site spacing to the ranges αₑ.
    #[serde(default = "one")]
    pub coordinate_scale: f64,
    pub t: usize,
    #[serde(default)]
    pub missing: MissingnessConfig,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    #[serde(default)]
    pub priors: PriorOverrides,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub prediction: PredictionSettings,
    #[serde(default)]
    pub holdout: HoldoutConfig,
    #[serde(default)]
    pub simulate: Option<ScenarioConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(RunConfig, String)> {
        let body = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&body)
            .map_err(|e| Error::Json(path.display().to_string(), e))?;
        cfg.validate()?;
        use sha2::Digest;
        let hash = hex_string(&sha2::Sha256::digest(body.as_bytes()));
        Ok((cfg, hash))
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.components.is_empty() || self.model.components.len() > 3 {
            return Err(Error::ConfigInvalid(format!(
                "model needs 1-3 spatial components, got {}",
                self.model.components.len()
            )));
        }
        if !(0.0..=0.5).contains(&self.holdout.fraction) {
            return Err(Error::ConfigInvalid(format!(
                "holdout fraction {} outside [0, 0.5]",
                self.holdout.fraction
            )));
        }
        if let Some(m) = &self.model.method {
            if m != "var" && m != "separable" {
                return Err(Error::ConfigInvalid(format!(
                    "method must be 'var' or 'separable', got '{m}'"
                )));
            }
        }
        for c in &self.model.components {
            c.build()?;
        }
        Ok(())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
