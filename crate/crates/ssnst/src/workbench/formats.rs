//! Plain-text file formats: network JSON, sites/observations/prediction
//! CSVs, per-chain draw CSVs, and the run manifest.
//!
//! Observations are long format `site_id,t,y,<covariates>` with an empty
//! `y` meaning missing; prediction sites carry their position columns plus
//! covariates per time step.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CovariateTable;
use crate::network::{Segment, Site};
use crate::sampler::{ChainDraws, PosteriorDraws};

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    segments: Vec<Segment>,
}

pub fn read_network(path: &Path) -> Result<Vec<Segment>> {
    let body = std::fs::read_to_string(path)?;
    let parsed: NetworkFile = serde_json::from_str(&body)
        .map_err(|e| Error::Json(path.display().to_string(), e))?;
    Ok(parsed.segments)
}

pub fn write_network(path: &Path, segments: &[Segment]) -> Result<()> {
    let body = serde_json::to_string_pretty(&NetworkFile { segments: segments.to_vec() })
        .map_err(|e| Error::Json(path.display().to_string(), e))?;
    std::fs::write(path, body)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::ParseError { file: path.display().to_string(), line, msg: msg.into() }
}

fn header_index(headers: &csv::StringRecord, path: &Path, required: &[&str]) -> Result<Vec<usize>> {
    required
        .iter()
        .map(|name| {
            headers.iter().position(|h| h == *name).ok_or_else(|| Error::SchemaError {
                file: path.display().to_string(),
                column: name.to_string(),
            })
        })
        .collect()
}

pub fn read_sites(path: &Path) -> Result<Vec<Site>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, path, &["site_id", "segment_id", "updist", "x", "y"])?;
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let field = |k: usize| -> Result<f64> {
            rec.get(idx[k])
                .ok_or_else(|| parse_err(path, line, "short record"))?
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line, format!("{e}")))
        };
        out.push(Site {
            site_id: field(0)? as i64,
            segment_id: field(1)? as i64,
            updist: field(2)?,
            x: field(3)?,
            y: field(4)?,
        });
    }
    if out.is_empty() {
        return Err(Error::SchemaError {
            file: path.display().to_string(),
            column: "site_id (no data rows)".into(),
        });
    }
    Ok(out)
}

pub fn write_sites(path: &Path, sites: &[Site]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "segment_id", "updist", "x", "y"])?;
    for s in sites {
        w.write_record(&[
            s.site_id.to_string(),
            s.segment_id.to_string(),
            s.updist.to_string(),
            s.x.to_string(),
            s.y.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Long-format observations pivoted to S×T with the covariate columns.
#[derive(Debug, Clone)]
pub struct ObservationTable {
    pub site_ids: Vec<i64>,
    pub time_values: Vec<f64>,
    pub y: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub covariates: CovariateTable,
}

pub fn read_observations(path: &Path) -> Result<ObservationTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, path, &["site_id", "t", "y"])?;
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    struct Row {
        site: i64,
        t: f64,
        y: Option<f64>,
        covs: Vec<f64>,
    }
    let mut rows = Vec::new();
    for (rix, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rix + 2;
        let site: i64 = rec
            .get(idx[0])
            .ok_or_else(|| parse_err(path, line, "short record"))?
            .trim()
            .parse()
            .map_err(|e| parse_err(path, line, format!("site_id: {e}")))?;
        let t: f64 = rec
            .get(idx[1])
            .ok_or_else(|| parse_err(path, line, "short record"))?
            .trim()
            .parse()
            .map_err(|e| parse_err(path, line, format!("t: {e}")))?;
        let y_raw = rec.get(idx[2]).unwrap_or("").trim();
        let y = if y_raw.is_empty() {
            None
        } else {
            Some(y_raw.parse().map_err(|e| parse_err(path, line, format!("y: {e}")))?)
        };
        let mut covs = Vec::with_capacity(cov_cols.len());
        for (ci, name) in &cov_cols {
            let raw = rec.get(*ci).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(parse_err(path, line, format!("covariate '{name}' is empty")));
            }
            covs.push(raw.parse().map_err(|e| parse_err(path, line, format!("{name}: {e}")))?);
        }
        rows.push(Row { site, t, y, covs });
    }
    if rows.is_empty() {
        return Err(Error::SchemaError {
            file: path.display().to_string(),
            column: "y (no data rows)".into(),
        });
    }

    let mut site_ids: Vec<i64> = rows.iter().map(|r| r.site).collect();
    site_ids.sort_unstable();
    site_ids.dedup();
    let mut time_values: Vec<f64> = rows.iter().map(|r| r.t).collect();
    time_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    time_values.dedup();

    let s = site_ids.len();
    let t_len = time_values.len();
    let site_pos: BTreeMap<i64, usize> = site_ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let time_pos = |t: f64| time_values.iter().position(|&v| v == t).unwrap();

    let mut y = DMatrix::from_element(s, t_len, f64::NAN);
    let mut observed = DMatrix::from_element(s, t_len, false);
    let mut seen = DMatrix::from_element(s, t_len, false);
    let mut covs: Vec<DMatrix<f64>> =
        cov_cols.iter().map(|_| DMatrix::from_element(s, t_len, f64::NAN)).collect();
    for r in &rows {
        let si = site_pos[&r.site];
        let ti = time_pos(r.t);
        seen[(si, ti)] = true;
        if let Some(v) = r.y {
            y[(si, ti)] = v;
            observed[(si, ti)] = true;
        }
        for (k, v) in r.covs.iter().enumerate() {
            covs[k][(si, ti)] = *v;
        }
    }
    for ti in 0..t_len {
        for si in 0..s {
            if !seen[(si, ti)] {
                return Err(Error::ConfigInvalid(format!(
                    "observations file is not a complete site x time grid: site {} has no row at t={}",
                    site_ids[si], time_values[ti]
                )));
            }
        }
    }
    Ok(ObservationTable {
        site_ids,
        time_values,
        y,
        observed,
        covariates: CovariateTable {
            names: cov_cols.into_iter().map(|(_, n)| n).collect(),
            values: covs,
        },
    })
}

pub fn write_observations(path: &Path, table: &ObservationTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["site_id".to_string(), "t".to_string(), "y".to_string()];
    header.extend(table.covariates.names.iter().cloned());
    w.write_record(&header)?;
    for (ti, tv) in table.time_values.iter().enumerate() {
        for (si, sid) in table.site_ids.iter().enumerate() {
            let mut rec = vec![
                sid.to_string(),
                tv.to_string(),
                if table.observed[(si, ti)] { table.y[(si, ti)].to_string() } else { String::new() },
            ];
            for v in &table.covariates.values {
                rec.push(v[(si, ti)].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Prediction-site file: positions plus covariates per time step.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    pub sites: Vec<Site>,
    pub time_values: Vec<f64>,
    pub covariates: CovariateTable,
}

pub fn read_prediction_sites(path: &Path) -> Result<PredictionTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, path, &["site_id", "segment_id", "updist", "x", "y", "t"])?;
    let cov_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut sites: Vec<Site> = Vec::new();
    let mut time_values: Vec<f64> = Vec::new();
    let mut cells: BTreeMap<(i64, u64), Vec<f64>> = BTreeMap::new();
    for (rix, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rix + 2;
        let get = |k: usize| -> Result<f64> {
            rec.get(idx[k])
                .ok_or_else(|| parse_err(path, line, "short record"))?
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line, format!("{e}")))
        };
        let site = Site {
            site_id: get(0)? as i64,
            segment_id: get(1)? as i64,
            updist: get(2)?,
            x: get(3)?,
            y: get(4)?,
        };
        let t = get(5)?;
        if !sites.iter().any(|s| s.site_id == site.site_id) {
            sites.push(site.clone());
        }
        if !time_values.contains(&t) {
            time_values.push(t);
        }
        let mut covs = Vec::with_capacity(cov_cols.len());
        for (ci, name) in &cov_cols {
            let raw = rec.get(*ci).unwrap_or("").trim();
            if raw.is_empty() {
                return Err(parse_err(path, line, format!("covariate '{name}' is empty")));
            }
            covs.push(raw.parse().map_err(|e| parse_err(path, line, format!("{name}: {e}")))?);
        }
        cells.insert((site.site_id, t.to_bits()), covs);
    }
    if sites.is_empty() {
        return Err(Error::SchemaError {
            file: path.display().to_string(),
            column: "site_id (no data rows)".into(),
        });
    }
    sites.sort_by_key(|s| s.site_id);
    time_values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let p = sites.len();
    let t_len = time_values.len();
    let mut values: Vec<DMatrix<f64>> =
        cov_cols.iter().map(|_| DMatrix::from_element(p, t_len, f64::NAN)).collect();
    for (pi, site) in sites.iter().enumerate() {
        for (ti, tv) in time_values.iter().enumerate() {
            let covs = cells.get(&(site.site_id, tv.to_bits())).ok_or_else(|| {
                Error::CovariateMissing(site.site_id, ti)
            })?;
            for (k, v) in covs.iter().enumerate() {
                values[k][(pi, ti)] = *v;
            }
        }
    }
    Ok(PredictionTable {
        sites,
        time_values,
        covariates: CovariateTable {
            names: cov_cols.into_iter().map(|(_, n)| n).collect(),
            values,
        },
    })
}

pub fn write_prediction_sites(path: &Path, table: &PredictionTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "site_id".to_string(),
        "segment_id".to_string(),
        "updist".to_string(),
        "x".to_string(),
        "y".to_string(),
        "t".to_string(),
    ];
    header.extend(table.covariates.names.iter().cloned());
    w.write_record(&header)?;
    for (ti, tv) in table.time_values.iter().enumerate() {
        for (pi, s) in table.sites.iter().enumerate() {
            let mut rec = vec![
                s.site_id.to_string(),
                s.segment_id.to_string(),
                s.updist.to_string(),
                s.x.to_string(),
                s.y.to_string(),
                tv.to_string(),
            ];
            for v in &table.covariates.values {
                rec.push(v[(pi, ti)].to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Manifest tying a fit run together: provenance, parameter names, the
/// missingness pattern, and the design transforms needed at prediction time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub param_names: Vec<String>,
    /// (site_id, time index) of cells the sampler imputed.
    pub missing_cells: Vec<(i64, usize)>,
    pub time_values: Vec<f64>,
    pub site_ids: Vec<i64>,
    pub x_names: Vec<String>,
    /// (mean, sd) per design column when standardization was applied.
    pub design_transforms: Vec<Option<(f64, f64)>>,
    /// (mean, sd) per φ-covariate column (covariate-link case).
    pub phi_transforms: Vec<(f64, f64)>,
    pub phi_covariate_names: Vec<String>,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Json(path.display().to_string(), e))?;
    std::fs::write(path, body)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Json(path.display().to_string(), e))
}

fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in 0..m.nrows() {
        let rec: Vec<String> = (0..m.ncols()).map(|c| format!("{:?}", m[(r, c)])).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (rix, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rix + 2;
        let row: Result<Vec<f64>> = rec
            .iter()
            .map(|v| v.trim().parse().map_err(|e| parse_err(path, line, format!("{e}"))))
            .collect();
        rows.push(row?);
    }
    let ncols = header.len();
    let m = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    Ok((header, m))
}

/// One CSV per chain: draws_chain<k>.csv, imputed_chain<k>.csv,
/// loglik_chain<k>.csv.
pub fn write_draws(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (k, chain) in draws.chains.iter().enumerate() {
        write_matrix_csv(
            &dir.join(format!("draws_chain{k}.csv")),
            &draws.param_names,
            &chain.params,
        )?;
        let imp_header: Vec<String> = draws
            .missing_cells
            .iter()
            .map(|(s, t)| format!("y[{s}:{t}]"))
            .collect();
        write_matrix_csv(&dir.join(format!("imputed_chain{k}.csv")), &imp_header, &chain.imputed)?;
        let ll_header: Vec<String> = (0..draws.n_times).map(|t| format!("t{t}")).collect();
        write_matrix_csv(&dir.join(format!("loglik_chain{k}.csv")), &ll_header, &chain.pointwise)?;
    }
    Ok(())
}

/// Rebuild a `PosteriorDraws` from the per-chain CSVs; panel site order is
/// needed to translate manifest cells back to indices.
pub fn read_draws(dir: &Path, manifest: &Manifest) -> Result<PosteriorDraws> {
    let mut chains = Vec::with_capacity(manifest.chains);
    for k in 0..manifest.chains {
        let (names, params) = read_matrix_csv(&dir.join(format!("draws_chain{k}.csv")))?;
        if names != manifest.param_names {
            return Err(Error::ConfigInvalid(format!(
                "draws_chain{k}.csv parameter names do not match the manifest"
            )));
        }
        let (_, imputed) = read_matrix_csv(&dir.join(format!("imputed_chain{k}.csv")))?;
        let (_, pointwise) = read_matrix_csv(&dir.join(format!("loglik_chain{k}.csv")))?;
        chains.push(ChainDraws {
            params,
            imputed,
            pointwise,
            accept_rate: vec![],
            final_scales: vec![],
        });
    }
    let site_pos: BTreeMap<i64, usize> = manifest
        .site_ids
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i))
        .collect();
    let missing_cells: Result<Vec<(usize, usize)>> = manifest
        .missing_cells
        .iter()
        .map(|&(sid, t)| {
            site_pos
                .get(&sid)
                .map(|&si| (si, t))
                .ok_or_else(|| Error::ConfigInvalid(format!("manifest references unknown site {sid}")))
        })
        .collect();
    Ok(PosteriorDraws {
        param_names: manifest.param_names.clone(),
        chains,
        missing_cells: missing_cells?,
        n_times: manifest.time_values.len(),
    })
}

/// Held-out or simulated truth rows for evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRow {
    pub site_id: i64,
    /// Index into the panel's time axis.
    pub t_index: usize,
    pub t_value: f64,
    pub y_true: f64,
    /// True when the whole series at this site was held out (block site).
    pub block: bool,
}

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "t_index", "t_value", "y_true", "block"])?;
    for r in rows {
        w.write_record(&[
            r.site_id.to_string(),
            r.t_index.to_string(),
            r.t_value.to_string(),
            format!("{:?}", r.y_true),
            (r.block as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let idx = header_index(&headers, path, &["site_id", "t_index", "t_value", "y_true", "block"])?;
    let mut out = Vec::new();
    for (rix, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rix + 2;
        let get = |k: usize| -> Result<&str> {
            rec.get(idx[k]).ok_or_else(|| parse_err(path, line, "short record"))
        };
        out.push(TruthRow {
            site_id: get(0)?.trim().parse().map_err(|e| parse_err(path, line, format!("{e}")))?,
            t_index: get(1)?.trim().parse().map_err(|e| parse_err(path, line, format!("{e}")))?,
            t_value: get(2)?.trim().parse().map_err(|e| parse_err(path, line, format!("{e}")))?,
            y_true: get(3)?.trim().parse().map_err(|e| parse_err(path, line, format!("{e}")))?,
            block: get(4)?.trim() == "1",
        });
    }
    Ok(out)
}
