//! Convergence diagnostics over post-warmup draws.
//!
//! `R̂` is the rank-normalized split statistic (maximum of the bulk and
//! folded-tail versions). ESS uses Geyer's initial monotone sequence over
//! the autocorrelations pooled across split chains.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Diagnostics for one scalar parameter. `None` marks a quantity that is
/// undefined for the input (single chain, or zero variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
    pub ess_tail: Option<f64>,
    pub mcse: Option<f64>,
    pub degenerate: bool,
}

pub fn summarize(name: &str, chains: &[Vec<f64>]) -> ParamDiagnostics {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = if all.len() > 1 {
        (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let degenerate = all.iter().all(|&x| x == all[0]);
    if degenerate {
        return ParamDiagnostics {
            name: name.to_string(),
            mean,
            sd,
            rhat: None,
            ess_bulk: None,
            ess_tail: None,
            mcse: None,
            degenerate,
        };
    }
    let ess_bulk = ess_bulk(chains);
    ParamDiagnostics {
        name: name.to_string(),
        mean,
        sd,
        rhat: if chains.len() >= 2 { rhat(chains) } else { None },
        ess_bulk,
        ess_tail: ess_tail(chains),
        mcse: ess_bulk.map(|e| sd / e.sqrt()),
        degenerate,
    }
}

/// Splits each chain into halves, dropping the middle draw of odd lengths.
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Pooled ranks (ties averaged) mapped through the normal quantile function.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let s = all.len();
    let ranks = average_ranks(&all);
    let normal = Normal::standard();
    let z: Vec<f64> = ranks
        .iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    let mut out = Vec::with_capacity(chains.len());
    let mut at = 0;
    for c in chains {
        out.push(z[at..at + c.len()].to_vec());
        at += c.len();
    }
    out
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn mean_var(c: &[f64]) -> (f64, f64) {
    let n = c.len() as f64;
    let m = c.iter().sum::<f64>() / n;
    let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Classic potential scale reduction over the given (already split) chains.
pub fn rhat_basic(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min()?;
    if m < 2 || n < 2 {
        return None;
    }
    let stats: Vec<(f64, f64)> = chains.iter().map(|c| mean_var(&c[..n])).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / m as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m as f64;
    let b = n as f64 * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    if w == 0.0 {
        return if b == 0.0 { None } else { Some(f64::INFINITY) };
    }
    let var_hat = (n as f64 - 1.0) / n as f64 * w + b / n as f64;
    Some((var_hat / w).sqrt())
}

/// Rank-normalized split `R̂`: the larger of the bulk and tail statistics.
pub fn rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let split = split_chains(chains);
    if split.iter().any(|c| c.len() < 2) {
        return None;
    }
    let bulk = rhat_basic(&rank_normalize(&split))?;
    let med = median(split.iter().flatten().copied().collect());
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|x| (x - med).abs()).collect())
        .collect();
    let tail = rhat_basic(&rank_normalize(&folded)).unwrap_or(bulk);
    Some(bulk.max(tail))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Type-7 sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub(crate) fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn autocovariance(c: &[f64], mean: f64, lag: usize) -> f64 {
    let n = c.len();
    (0..n - lag).map(|i| (c[i] - mean) * (c[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial positive, monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min()?;
    if m == 0 || n < 4 {
        return None;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mean_acov = |lag: usize| {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocovariance(c, mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let chain_var_mean = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = chain_var_mean * (nf - 1.0) / nf;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return None;
    }
    let rho_at = |lag: usize| 1.0 - (chain_var_mean - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho_hat[1] = rho_odd;
    let mut t = 1;
    while t < n - 5 && rho_even + rho_odd > 0.0 {
        rho_even = rho_at(t + 1);
        rho_odd = rho_at(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho_hat[max_t + 1] = rho_even;
    }
    // enforce a monotone sequence of pair sums
    let mut t = 1;
    while t + 2 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = 0.5 * (rho_hat[t - 1] + rho_hat[t]);
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1];
    let tau = tau.max(1.0 / total.log10());
    Some(total / tau)
}

/// ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> Option<f64> {
    ess(&rank_normalize(&split_chains(chains)))
}

/// Minimum ESS of the 5% and 95% quantile indicators.
pub fn ess_tail(chains: &[Vec<f64>]) -> Option<f64> {
    let split = split_chains(chains);
    let all: Vec<f64> = split.iter().flatten().copied().collect();
    let mut tails = Vec::new();
    for q in [0.05, 0.95] {
        let cut = quantile(&all, q);
        let ind: Vec<Vec<f64>> = split
            .iter()
            .map(|c| c.iter().map(|&x| (x <= cut) as u8 as f64).collect())
            .collect();
        if let Some(e) = ess(&ind) {
            tails.push(e);
        }
    }
    tails.into_iter().reduce(f64::min)
}
