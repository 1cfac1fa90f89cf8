//! Design-matrix assembly: named covariate columns, optional Fourier pair,
//! and center/scale standardization recorded for prediction reuse.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First harmonic pair at period `m`: (sin(2πt/m), cos(2πt/m)). Identical
/// across sites at a fixed t since these are purely temporal covariates.
pub fn fourier_pair(t: f64, m: f64) -> (f64, f64) {
    let w = 2.0 * std::f64::consts::PI * t / m;
    (w.sin(), w.cos())
}

/// One design term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// Named covariate column from the observation table.
    Column(String),
    /// First Fourier pair with the given period; expands to two columns.
    Fourier(f64),
}

/// Design description: intercept is implicit (column 0 of ones); named
/// columns may be standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub terms: Vec<Term>,
    #[serde(default)]
    pub standardize: bool,
}

impl Formula {
    pub fn intercept_only() -> Self {
        Formula { terms: vec![], standardize: false }
    }
}

/// Raw covariate values per name, each S×T.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub values: Vec<DMatrix<f64>>,
}

impl CovariateTable {
    pub fn column(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.values[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

/// Built design: per-time S×p matrices, column names, and the recorded
/// standardization (mean, sd) per column (None for intercept/Fourier).
#[derive(Debug, Clone)]
pub struct Design {
    pub x: Vec<DMatrix<f64>>,
    pub names: Vec<String>,
    pub transforms: Vec<Option<(f64, f64)>>,
}

impl Design {
    pub fn n_beta(&self) -> usize {
        self.names.len()
    }
}

/// Assemble the design from a covariate table. `time_values` supplies the t
/// fed to the Fourier terms (one per slice).
pub fn build_design(
    table: &CovariateTable,
    formula: &Formula,
    n_sites: usize,
    time_values: &[f64],
) -> Result<Design> {
    let t_len = time_values.len();
    let mut names = vec!["intercept".to_string()];
    let mut transforms: Vec<Option<(f64, f64)>> = vec![None];
    // columns[k][t] is an S-vector
    let mut columns: Vec<Vec<Vec<f64>>> = vec![vec![vec![1.0; n_sites]; t_len]];

    for term in &formula.terms {
        match term {
            Term::Column(name) => {
                let raw = table.column(name)?;
                if raw.nrows() != n_sites || raw.ncols() != t_len {
                    return Err(Error::DimensionMismatch(format!(
                        "covariate '{name}' is {:?}, expected {}x{}",
                        raw.shape(),
                        n_sites,
                        t_len
                    )));
                }
                let transform = if formula.standardize {
                    let n = (n_sites * t_len) as f64;
                    let mean = raw.iter().sum::<f64>() / n;
                    let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    if sd > 0.0 {
                        Some((mean, sd))
                    } else {
                        None
                    }
                } else {
                    None
                };
                let col: Vec<Vec<f64>> = (0..t_len)
                    .map(|t| {
                        (0..n_sites)
                            .map(|s| match transform {
                                Some((m, sd)) => (raw[(s, t)] - m) / sd,
                                None => raw[(s, t)],
                            })
                            .collect()
                    })
                    .collect();
                names.push(name.clone());
                transforms.push(transform);
                columns.push(col);
            }
            Term::Fourier(m) => {
                if !(*m > 0.0) {
                    return Err(Error::ConfigInvalid(format!("fourier period {m} must be > 0")));
                }
                let mut sin_col = Vec::with_capacity(t_len);
                let mut cos_col = Vec::with_capacity(t_len);
                for &tv in time_values {
                    let (s, c) = fourier_pair(tv, *m);
                    sin_col.push(vec![s; n_sites]);
                    cos_col.push(vec![c; n_sites]);
                }
                names.push(format!("sin_{m}"));
                names.push(format!("cos_{m}"));
                transforms.push(None);
                transforms.push(None);
                columns.push(sin_col);
                columns.push(cos_col);
            }
        }
    }

    let p = names.len();
    let x: Vec<DMatrix<f64>> = (0..t_len)
        .map(|t| DMatrix::from_fn(n_sites, p, |s, k| columns[k][t][s]))
        .collect();
    Ok(Design { x, names, transforms })
}

/// Rebuild the design for new sites using the transforms recorded at fit
/// time (means/sds are *not* recomputed from the new table).
pub fn apply_design(
    design: &Design,
    formula: &Formula,
    table: &CovariateTable,
    n_sites: usize,
    time_values: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let t_len = time_values.len();
    let p = design.n_beta();
    let mut x: Vec<DMatrix<f64>> = (0..t_len).map(|_| DMatrix::zeros(n_sites, p)) .collect();
    for t in 0..t_len {
        for s in 0..n_sites {
            x[t][(s, 0)] = 1.0;
        }
    }
    let mut k = 1;
    for term in &formula.terms {
        match term {
            Term::Column(name) => {
                let raw = table.column(name)?;
                if raw.nrows() != n_sites || raw.ncols() != t_len {
                    return Err(Error::DimensionMismatch(format!(
                        "covariate '{name}' is {:?}, expected {}x{}",
                        raw.shape(),
                        n_sites,
                        t_len
                    )));
                }
                for t in 0..t_len {
                    for s in 0..n_sites {
                        x[t][(s, k)] = match design.transforms[k] {
                            Some((m, sd)) => (raw[(s, t)] - m) / sd,
                            None => raw[(s, t)],
                        };
                    }
                }
                k += 1;
            }
            Term::Fourier(m) => {
                for (t, &tv) in time_values.iter().enumerate() {
                    let (sv, cv) = fourier_pair(tv, *m);
                    for s in 0..n_sites {
                        x[t][(s, k)] = sv;
                        x[t][(s, k + 1)] = cv;
                    }
                }
                k += 2;
            }
        }
    }
    Ok(x)
}
