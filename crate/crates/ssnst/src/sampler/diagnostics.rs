//! Convergence diagnostics: split-chain rank-normalized R-hat, bulk ESS via
//! Geyer's initial-positive-sequence truncation, and MCSE.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Split every chain in half, dropping one trailing draw on odd lengths.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let n = c.len() / 2;
        out.push(c[..n].to_vec());
        out.push(c[n..2 * n].to_vec());
    }
    out
}

/// Rank-normalize pooled draws: average ranks for ties, then the normal
/// quantile of (rank - 3/8)/(n + 1/4).
fn rank_normalize(seqs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = seqs.iter().map(|s| s.len()).sum();
    let mut indexed: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (ci, c) in seqs.iter().enumerate() {
        for (k, &v) in c.iter().enumerate() {
            indexed.push((v, ci, k));
        }
    }
    indexed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut out: Vec<Vec<f64>> = seqs.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let z = norm.inverse_cdf((avg_rank - 0.375) / (total as f64 + 0.25));
        for &(_, ci, k) in indexed.iter().take(j + 1).skip(i) {
            out[ci][k] = z;
        }
        i = j + 1;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Classic potential-scale-reduction on already-transformed sequences.
fn rhat_of(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len() as f64;
    let chain_means: Vec<f64> = seqs.iter().map(|c| mean(c)).collect();
    let w = seqs.iter().map(|c| sample_var(c)).sum::<f64>() / m;
    let b = n * sample_var(&chain_means);
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Biased autocovariance at lag `lag` (denominator n).
fn autocov(c: &[f64], lag: usize) -> f64 {
    let n = c.len();
    let m = mean(c);
    (0..n - lag).map(|i| (c[i] - m) * (c[i + lag] - m)).sum::<f64>() / n as f64
}

/// Effective sample size on transformed split sequences: combined
/// autocorrelations truncated at the first negative paired sum.
fn ess_of(seqs: &[Vec<f64>]) -> f64 {
    let m = seqs.len() as f64;
    let n = seqs[0].len();
    let w = seqs.iter().map(|c| sample_var(c)).sum::<f64>() / m;
    let chain_means: Vec<f64> = seqs.iter().map(|c| mean(c)).collect();
    let b_over_n = if seqs.len() > 1 { sample_var(&chain_means) } else { 0.0 };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;
    if var_plus == 0.0 {
        return f64::NAN;
    }
    let mut rho = Vec::with_capacity(n);
    for lag in 0..n - 1 {
        let acov = seqs.iter().map(|c| autocov(c, lag)).sum::<f64>() / m;
        rho.push(1.0 - (w - acov) / var_plus);
    }
    // Geyer initial positive sequence: stop at the first negative pair sum.
    let mut tau = -1.0 + 2.0 * rho[0]; // rho[0] = with biased acov slightly < 1
    let mut k = 1;
    while k + 1 < rho.len() {
        let pair = rho[k] + rho[k + 1];
        if pair < 0.0 {
            break;
        }
        tau += 2.0 * pair;
        k += 2;
    }
    let total = m * n as f64;
    total / tau.max(1e-12)
}

/// Per-parameter summary.
#[derive(Debug, Clone)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
    pub mcse: f64,
}

/// Split-chain rank-normalized R-hat.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws { needed: 2, got: chains.len() });
    }
    if chains.iter().any(|c| c.len() < 4) {
        return Err(Error::InsufficientDraws {
            needed: 4,
            got: chains.iter().map(|c| c.len()).min().unwrap_or(0),
        });
    }
    let split = split_chains(chains);
    let z = rank_normalize(&split);
    Ok(rhat_of(&z))
}

/// Bulk ESS on rank-normalized split chains.
pub fn bulk_ess(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.iter().any(|c| c.len() < 4) || chains.is_empty() {
        return Err(Error::InsufficientDraws {
            needed: 4,
            got: chains.iter().map(|c| c.len()).min().unwrap_or(0),
        });
    }
    let split = split_chains(chains);
    let z = rank_normalize(&split);
    Ok(ess_of(&z))
}

/// MCSE of the posterior mean: sd / sqrt(bulk ESS); exactly 0 for a
/// degenerate (constant) sample.
pub fn mcse(chains: &[Vec<f64>]) -> Result<f64> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    if pooled.len() < 2 {
        return Err(Error::InsufficientDraws { needed: 2, got: pooled.len() });
    }
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(0.0);
    }
    let sd = sample_var(&pooled).sqrt();
    let ess = bulk_ess(chains)?;
    Ok(sd / ess.sqrt())
}

/// Full per-parameter table from per-chain draw columns.
///
/// `chains_by_param[p][c]` is chain c's draws of parameter p.
pub fn diagnostics_table(
    names: &[String],
    chains_by_param: &[Vec<Vec<f64>>],
) -> Result<Vec<ParamDiagnostics>> {
    let mut out = Vec::with_capacity(names.len());
    for (name, chains) in names.iter().zip(chains_by_param) {
        let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
        let m = mean(&pooled);
        let sd = sample_var(&pooled).sqrt();
        let rhat = split_rhat(chains)?;
        let (ess, mc) = if sd == 0.0 {
            (f64::NAN, 0.0)
        } else {
            let e = bulk_ess(chains)?;
            (e, sd / e.sqrt())
        };
        out.push(ParamDiagnostics {
            name: name.clone(),
            mean: m,
            sd,
            rhat,
            ess_bulk: ess,
            mcse: mc,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_chains_look_converged() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let rhat = split_rhat(&chains).unwrap();
        assert!((0.99..=1.01).contains(&rhat), "rhat = {rhat}");
        let ess = bulk_ess(&chains).unwrap();
        assert!(ess >= 0.8 * 4000.0, "ess = {ess}");
        let mc = mcse(&chains).unwrap();
        // i.i.d.: MCSE ≈ sd/sqrt(N) within 10%
        let expect = 1.0 / (4000.0f64).sqrt();
        assert!((mc - expect).abs() / expect < 0.25, "mcse {mc} vs {expect}");
    }

    #[test]
    fn disjoint_constant_chains_diverge() {
        let chains = vec![vec![0.0; 100], vec![1.0; 100]];
        let rhat = split_rhat(&chains).unwrap();
        assert!(rhat > 2.0, "rhat = {rhat}");
    }

    #[test]
    fn constant_sample_has_zero_mcse() {
        let chains = vec![vec![3.3; 50], vec![3.3; 50]];
        assert_eq!(mcse(&chains).unwrap(), 0.0);
    }

    #[test]
    fn single_chain_rhat_is_insufficient() {
        let chains = vec![vec![0.0, 1.0, 2.0, 3.0]];
        assert!(matches!(
            split_rhat(&chains),
            Err(Error::InsufficientDraws { .. })
        ));
    }

    #[test]
    fn autocorrelated_chain_has_reduced_ess() {
        // AR(1) with φ = 0.9: ESS should be far below N.
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let mut chains = Vec::new();
        for _ in 0..4 {
            let mut c = vec![0.0f64];
            for _ in 1..2000 {
                let e: f64 = rng.sample(StandardNormal);
                let prev = *c.last().unwrap();
                c.push(0.9 * prev + e);
            }
            chains.push(c);
        }
        let ess = bulk_ess(&chains).unwrap();
        assert!(ess < 0.25 * 8000.0, "ess = {ess}");
        assert!(ess > 50.0, "ess = {ess}");
    }
}
