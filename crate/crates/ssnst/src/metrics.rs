//! Model-comparison and verification metrics: RMSPE, sample CRPS, interval
//! coverage with an exact binomial consistency test, WAIC, and MCSE-based
//! fixed-effect ranking.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::{bulk_ess, mcse};

/// Coverage verdict from the two-sided exact binomial test at the 0.05 and
/// 0.10 levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageCategory {
    Consistent,
    Borderline,
    Inconsistent,
}

/// One evaluation run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub rmspe: f64,
    #[serde(rename = "crps")]
    pub crps_mean: f64,
    pub coverage: f64,
    pub coverage_p_value: f64,
    pub coverage_category: CoverageCategory,
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub se_rank: Vec<(String, usize)>,
}

/// Root mean square prediction error over held-out cells.
pub fn rmspe(pred_mean: &[f64], truth: &[f64]) -> Result<f64> {
    if pred_mean.is_empty() || pred_mean.len() != truth.len() {
        return Err(Error::EmptyHoldout);
    }
    let mse = pred_mean
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / pred_mean.len() as f64;
    Ok(mse.sqrt())
}

/// Sample CRPS for one cell: mean|X - y| - ½ · mean|X - X'| with the
/// pairwise mean over all ordered pairs (the unbiased estimator). The
/// pairwise sum is computed exactly in O(m log m) from the sorted draws.
pub fn crps_cell(draws: &[f64], truth: f64) -> Result<f64> {
    let m = draws.len();
    if m < 2 {
        return Err(Error::TooFewDraws(m));
    }
    let term1 = draws.iter().map(|x| (x - truth).abs()).sum::<f64>() / m as f64;
    let mut sorted = draws.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Σ_{i<j} (x_(j) - x_(i)) = Σ_k (2k - m + 1) x_(k)
    let mut pair_sum = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        pair_sum += (2.0 * k as f64 - m as f64 + 1.0) * x;
    }
    let term2 = 2.0 * pair_sum / (m as f64 * (m as f64 - 1.0));
    Ok(term1 - 0.5 * term2)
}

/// Mean CRPS over cells; `draws` has one row per posterior draw and one
/// column per held-out cell.
pub fn crps_sample(draws: &DMatrix<f64>, truth: &[f64]) -> Result<f64> {
    if truth.is_empty() || draws.ncols() != truth.len() {
        return Err(Error::EmptyHoldout);
    }
    let mut total = 0.0;
    for (c, y) in truth.iter().enumerate() {
        let col: Vec<f64> = draws.column(c).iter().copied().collect();
        total += crps_cell(&col, *y)?;
    }
    Ok(total / truth.len() as f64)
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn binom_pmf(n: u64, k: u64, p: f64) -> f64 {
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    (ln_choose + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Two-sided exact binomial p-value for observing `k` of `n` at rate `p`:
/// 2·min(P(X ≤ k), P(X ≥ k)), capped at 1.
pub fn exact_binomial_two_sided(k: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return if (p <= 0.0 && k == 0) || (p >= 1.0 && k == n) { 1.0 } else { 0.0 };
    }
    let lower: f64 = (0..=k).map(|j| binom_pmf(n, j, p)).sum();
    let upper: f64 = (k..=n).map(|j| binom_pmf(n, j, p)).sum();
    (2.0 * lower.min(upper)).min(1.0)
}

/// Proportion of truths inside their intervals plus the consistency verdict:
/// consistent when the exact binomial p-value is ≥ 0.10, borderline in
/// [0.05, 0.10), inconsistent below 0.05.
pub fn coverage(
    intervals: &[(f64, f64)],
    truth: &[f64],
    nominal: f64,
) -> Result<(f64, f64, CoverageCategory)> {
    if intervals.is_empty() || intervals.len() != truth.len() {
        return Err(Error::EmptyHoldout);
    }
    if !(nominal > 0.0 && nominal < 1.0) {
        return Err(Error::ConfigInvalid(format!("nominal coverage {nominal} outside (0,1)")));
    }
    let n = intervals.len() as u64;
    let k = intervals
        .iter()
        .zip(truth)
        .filter(|((lo, hi), y)| *lo <= **y && **y <= *hi)
        .count() as u64;
    let proportion = k as f64 / n as f64;
    let p_value = exact_binomial_two_sided(k, n, nominal);
    let category = if p_value >= 0.10 {
        CoverageCategory::Consistent
    } else if p_value >= 0.05 {
        CoverageCategory::Borderline
    } else {
        CoverageCategory::Inconsistent
    };
    Ok((proportion, p_value, category))
}

/// WAIC pieces.
#[derive(Debug, Clone, Serialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
    pub pointwise_lppd: Vec<f64>,
    pub pointwise_p: Vec<f64>,
    /// True when only one draw was available (variance penalty is zero).
    pub degenerate: bool,
}

/// WAIC from a draws × points matrix of pointwise log densities:
/// lppd = Σ_i log mean_d exp(ll), p_waic = Σ_i var_d(ll),
/// waic = -2(lppd - p_waic).
pub fn waic(pointwise_loglik: &DMatrix<f64>) -> Result<Waic> {
    let (d, n) = pointwise_loglik.shape();
    if d == 0 || n == 0 {
        return Err(Error::InsufficientDraws { needed: 1, got: 0 });
    }
    let mut lppd = 0.0;
    let mut p_waic = 0.0;
    let mut pointwise_lppd = Vec::with_capacity(n);
    let mut pointwise_p = Vec::with_capacity(n);
    for i in 0..n {
        let col = pointwise_loglik.column(i);
        let max = col.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + (col.iter().map(|&v| (v - max).exp()).sum::<f64>() / d as f64).ln();
        pointwise_lppd.push(lse);
        lppd += lse;
        // Population variance (denominator D): invariant under draw
        // duplication, unlike the D-1 estimator.
        let mean = col.iter().sum::<f64>() / d as f64;
        let var = col.iter().map(|&v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        pointwise_p.push(var);
        p_waic += var;
    }
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
        pointwise_lppd,
        pointwise_p,
        degenerate: d == 1,
    })
}

/// Rank fixed effects by the MCSE of their posterior mean (1 = smallest).
/// Ties break lexically by parameter name. Returns (name, rank) pairs in the
/// input order plus the mean rank.
pub fn mcse_rank(
    chains_by_effect: &[Vec<Vec<f64>>],
    names: &[String],
) -> Result<(Vec<(String, usize)>, f64)> {
    if names.len() != chains_by_effect.len() {
        return Err(Error::DimensionMismatch("names vs effects".into()));
    }
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(names.len());
    for (i, chains) in chains_by_effect.iter().enumerate() {
        scored.push((i, mcse(chains)?));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .1
            .partial_cmp(&scored[b].1)
            .unwrap()
            .then_with(|| names[a].cmp(&names[b]))
    });
    let mut ranks = vec![0usize; names.len()];
    for (rank, &idx) in order.iter().enumerate() {
        ranks[idx] = rank + 1;
    }
    let mean_rank = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    Ok((
        names.iter().cloned().zip(ranks).collect(),
        mean_rank,
    ))
}

/// Bulk-ESS helper re-exported for report assembly.
pub fn ess_of_chains(chains: &[Vec<f64>]) -> Result<f64> {
    bulk_ess(chains)
}
