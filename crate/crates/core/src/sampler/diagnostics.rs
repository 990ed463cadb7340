//! Split-R̂ and multi-chain effective sample size.

use crate::statfns::{mean, variance};

fn trimmed(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    chains.iter().map(|c| &c[..n]).collect()
}

/// Potential scale reduction over chains split in half. An odd middle
/// draw is dropped; chains are trimmed to the shortest length.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let chains = trimmed(chains);
    let n = chains.first().map_or(0, |c| c.len());
    if n < 4 {
        return f64::NAN;
    }
    let half = n / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in &chains {
        halves.push(&c[..half]);
        halves.push(&c[n - half..]);
    }
    rhat_of(&halves)
}

fn rhat_of(chains: &[&[f64]]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| variance(c)).sum::<f64>() / chains.len() as f64;
    let between = n * variance(&means);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Effective sample size with Geyer's initial monotone positive sequence
/// truncation applied to the multi-chain autocorrelation estimate.
/// Capped at the total number of draws.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let chains = trimmed(chains);
    let m = chains.len();
    let n = chains.first().map_or(0, |c| c.len());
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let total = (m * n) as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| (0..n - t).map(|i| (c[i] - mu) * (c[i + t] - mu)).sum::<f64>() / n as f64)
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let acov0 = acov(0);
    let within = acov0 * nf / (nf - 1.0);
    let mut var_plus = within * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += variance(&means);
    }
    if var_plus <= 0.0 {
        return total;
    }
    let rho = |a: f64| 1.0 - (within - a) / var_plus;

    let mut tau_sum = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let r0 = if t == 0 { 1.0 } else { rho(acov(t)) };
        let r1 = rho(acov(t + 1));
        let mut pair = r0 + r1;
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev_pair);
        tau_sum += pair;
        prev_pair = pair;
        t += 2;
    }
    let tau = (-1.0 + 2.0 * tau_sum).max(1.0 / total.log10().max(1.0));
    (total / tau).min(total)
}
