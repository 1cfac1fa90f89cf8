//! Per-chain checkpoints: everything needed to continue a chain
//! bit-identically — unconstrained state, working response, proposal
//! scales, retained draws so far, and the RNG position.
//!
//! The format is versioned JSON, documented but not stable across releases.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub chain: usize,
    /// Iterations completed so far.
    pub iteration: usize,
    pub seed: u64,
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub u: Vec<f64>,
    pub log_post: f64,
    pub y_work: Vec<f64>,
    pub scales: Vec<f64>,
    pub adapt_steps: Vec<u64>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
    #[serde(default)]
    pub welford_n: u64,
    #[serde(default)]
    pub welford_mean: Vec<f64>,
    #[serde(default)]
    pub welford_m2: Vec<f64>,
    pub retained_params: Vec<Vec<f64>>,
    pub retained_imputed: Vec<Vec<f64>>,
    pub retained_pointwise: Vec<Vec<f64>>,
}

pub fn checkpoint_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("checkpoint_chain{chain}.json"))
}

pub fn save(dir: &Path, cp: &Checkpoint) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, cp.chain);
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_vec(cp).map_err(|e| Error::Json(path.display().to_string(), e))?;
    std::fs::write(&tmp, body)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

pub fn load(dir: &Path, chain: usize) -> Result<Option<Checkpoint>> {
    let path = checkpoint_path(dir, chain);
    if !path.exists() {
        return Ok(None);
    }
    let body = std::fs::read_to_string(&path)?;
    let cp: Checkpoint =
        serde_json::from_str(&body).map_err(|e| Error::Json(path.display().to_string(), e))?;
    if cp.version != CHECKPOINT_VERSION {
        return Err(Error::ConfigInvalid(format!(
            "checkpoint version {} unsupported (expected {})",
            cp.version, CHECKPOINT_VERSION
        )));
    }
    Ok(Some(cp))
}
