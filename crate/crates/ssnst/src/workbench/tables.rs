//! Plot-ready tabular outputs: predictions with HDI columns, exceedance per
//! (site, t, threshold), proportion-above posterior samples per t, posterior
//! histograms, and the diagnostics JSON.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::predictor::{PredictionResult, PredictionTask};
use crate::sampler::{ParamDiagnostics, PosteriorDraws};

use super::formats::TruthRow;

pub fn write_predictions(path: &Path, res: &PredictionResult, task: &PredictionTask) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "site_id".to_string(),
        "t_index".to_string(),
        "t_value".to_string(),
        "mean".to_string(),
        "sd".to_string(),
        "hdi_lower".to_string(),
        "hdi_upper".to_string(),
    ];
    for th in &task.thresholds {
        header.push(format!("exceed_{th}"));
    }
    w.write_record(&header)?;
    for (p, sid) in res.site_ids.iter().enumerate() {
        for (t, tv) in res.time_values.iter().enumerate() {
            let mut rec = vec![
                sid.to_string(),
                t.to_string(),
                tv.to_string(),
                format!("{:?}", res.mean[(p, t)]),
                format!("{:?}", res.sd[(p, t)]),
                format!("{:?}", res.hdi_lower[(p, t)]),
                format!("{:?}", res.hdi_upper[(p, t)]),
            ];
            for k in 0..task.thresholds.len() {
                rec.push(format!("{:?}", res.exceedance[k][(p, t)]));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct PredictionRow {
    pub site_id: i64,
    pub t_index: usize,
    pub mean: f64,
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::SchemaError {
            file: path.display().to_string(),
            column: name.to_string(),
        })
    };
    let (i_site, i_t, i_mean) = (find("site_id")?, find("t_index")?, find("mean")?);
    let mut out = Vec::new();
    for (rix, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = rix + 2;
        let parse_err = |msg: String| Error::ParseError {
            file: path.display().to_string(),
            line,
            msg,
        };
        out.push(PredictionRow {
            site_id: rec.get(i_site).unwrap_or("").trim().parse().map_err(|e| parse_err(format!("{e}")))?,
            t_index: rec.get(i_t).unwrap_or("").trim().parse().map_err(|e| parse_err(format!("{e}")))?,
            mean: rec.get(i_mean).unwrap_or("").trim().parse().map_err(|e| parse_err(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// Tidy CSV with exactly sites × times × thresholds rows.
pub fn write_exceedance(path: &Path, res: &PredictionResult, task: &PredictionTask) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "t_index", "t_value", "threshold", "probability"])?;
    for (k, th) in task.thresholds.iter().enumerate() {
        for (p, sid) in res.site_ids.iter().enumerate() {
            for (t, tv) in res.time_values.iter().enumerate() {
                w.write_record(&[
                    sid.to_string(),
                    t.to_string(),
                    tv.to_string(),
                    th.to_string(),
                    format!("{:?}", res.exceedance[k][(p, t)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Posterior draws of the proportion of prediction sites above each
/// threshold, per time step.
pub fn write_proportion_above(
    path: &Path,
    res: &PredictionResult,
    task: &PredictionTask,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "draw", "t_index", "t_value", "proportion"])?;
    for (k, th) in task.thresholds.iter().enumerate() {
        let m = &res.proportion_above[k];
        for d in 0..m.nrows() {
            for (t, tv) in res.time_values.iter().enumerate() {
                w.write_record(&[
                    th.to_string(),
                    d.to_string(),
                    t.to_string(),
                    tv.to_string(),
                    format!("{:?}", m[(d, t)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Held-out cells with their posterior summaries (predicted-vs-observed).
pub fn write_pred_vs_observed(
    path: &Path,
    truth: &[TruthRow],
    pred_mean: &[f64],
    intervals: &[(f64, f64)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["site_id", "t_index", "t_value", "y_true", "mean", "hdi_lower", "hdi_upper", "block"])?;
    for (i, r) in truth.iter().enumerate() {
        w.write_record(&[
            r.site_id.to_string(),
            r.t_index.to_string(),
            r.t_value.to_string(),
            format!("{:?}", r.y_true),
            format!("{:?}", pred_mean[i]),
            format!("{:?}", intervals[i].0),
            format!("{:?}", intervals[i].1),
            (r.block as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Histogram bins (30 per parameter) over the stacked draws.
pub fn write_posterior_histograms(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let stacked = draws.stacked_params();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "bin_lower", "bin_upper", "count"])?;
    const BINS: usize = 30;
    for (k, name) in draws.param_names.iter().enumerate() {
        let col = stacked.column(k);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            w.write_record(&[name.clone(), format!("{lo:?}"), format!("{hi:?}"), col.len().to_string()])?;
            continue;
        }
        let width = (hi - lo) / BINS as f64;
        let mut counts = [0usize; BINS];
        for &v in col.iter() {
            let b = (((v - lo) / width) as usize).min(BINS - 1);
            counts[b] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            w.write_record(&[
                name.clone(),
                format!("{:?}", lo + b as f64 * width),
                format!("{:?}", lo + (b + 1) as f64 * width),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DiagRow<'a> {
    name: &'a str,
    mean: f64,
    sd: f64,
    rhat: f64,
    ess_bulk: f64,
    mcse: f64,
}

pub fn write_diagnostics_json(
    path: &Path,
    rows: &[ParamDiagnostics],
    draws: &PosteriorDraws,
) -> Result<()> {
    let body = serde_json::json!({
        "parameters": rows.iter().map(|r| DiagRow {
            name: &r.name,
            mean: r.mean,
            sd: r.sd,
            rhat: r.rhat,
            ess_bulk: r.ess_bulk,
            mcse: r.mcse,
        }).collect::<Vec<_>>(),
        "accept_rates": draws.chains.iter().map(|c| c.accept_rate.clone()).collect::<Vec<_>>(),
    });
    std::fs::write(path, serde_json::to_string_pretty(&body).unwrap())?;
    Ok(())
}
