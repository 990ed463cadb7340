//! Adaptive Metropolis-within-Gibbs over a flat parameter vector.
//!
//! Each sweep updates every coordinate in turn with a one-dimensional
//! Gaussian random-walk proposal, then runs any target-specific extra
//! moves. Proposal scales are tuned in batches of `adapt_window` sweeps
//! during burn-in (Robbins–Monro on the log scale toward `target_accept`)
//! and frozen afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub trait Target {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Log density viewed as a function of `x[i]` only. Terms that do not
    /// involve `x[i]` may be dropped.
    fn coordinate_log_density(&self, x: &[f64], _i: usize) -> f64 {
        self.log_density(x)
    }

    fn n_extra_moves(&self) -> usize {
        0
    }

    /// Runs extra move `k` in place. Returns `Some(accepted)` for tunable
    /// Metropolis moves and `None` for exact (always accepted) updates.
    fn extra_move(&self, _k: usize, _x: &mut [f64], _step: f64, _rng: &mut ChaCha8Rng) -> Option<bool> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub burn_in: usize,
    pub kept: usize,
    pub thin: usize,
    pub adapt_window: usize,
    pub target_accept: f64,
    pub initial_step: f64,
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    /// Post burn-in acceptance rate per coordinate.
    pub acceptance: Vec<f64>,
    /// Post burn-in acceptance rate per extra move (NaN for exact updates).
    pub extra_acceptance: Vec<f64>,
    /// Final (frozen) proposal scales, coordinates then extra moves.
    pub step_sizes: Vec<f64>,
    /// Proposal scales at the end of every window, burn-in included.
    pub step_trace: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

const MIN_LOG_STEP: f64 = -14.0;
const MAX_LOG_STEP: f64 = 7.0;

/// Metropolis accept/reject on a log ratio. NaN is always rejected.
#[inline]
pub fn accept(log_ratio: f64, rng: &mut ChaCha8Rng) -> bool {
    if log_ratio >= 0.0 {
        return true;
    }
    if log_ratio.is_nan() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}

/// Runs burn-in plus `kept * thin` sweeps, calling `on_keep` on every
/// `thin`-th post burn-in state.
pub fn run<T: Target + ?Sized>(
    target: &T,
    mut x: Vec<f64>,
    cfg: &EngineConfig,
    rng: &mut ChaCha8Rng,
    mut on_keep: impl FnMut(&[f64]),
) -> EngineOutput {
    let dim = target.dim();
    let n_extra = target.n_extra_moves();
    let n_moves = dim + n_extra;
    let mut log_steps = vec![cfg.initial_step.ln(); n_moves];
    let mut window_accepts = vec![0usize; n_moves];
    let mut window_tries = vec![0usize; n_moves];
    let mut kept_accepts = vec![0usize; n_moves];
    let mut kept_tries = vec![0usize; n_moves];
    let mut step_trace = Vec::new();
    let mut windows_done = 0usize;

    let total = cfg.burn_in + cfg.kept * cfg.thin;
    for iter in 0..total {
        let burning = iter < cfg.burn_in;

        for i in 0..dim {
            let current = x[i];
            let lp_old = target.coordinate_log_density(&x, i);
            let z: f64 = rng.sample(StandardNormal);
            x[i] = current + log_steps[i].exp() * z;
            let lp_new = target.coordinate_log_density(&x, i);
            let ok = accept(lp_new - lp_old, rng);
            if !ok {
                x[i] = current;
            }
            tally(i, ok, burning, &mut window_accepts, &mut window_tries, &mut kept_accepts, &mut kept_tries);
        }
        for k in 0..n_extra {
            if let Some(ok) = target.extra_move(k, &mut x, log_steps[dim + k].exp(), rng) {
                tally(dim + k, ok, burning, &mut window_accepts, &mut window_tries, &mut kept_accepts, &mut kept_tries);
            }
        }

        if (iter + 1).is_multiple_of(cfg.adapt_window) {
            if burning {
                windows_done += 1;
                let gain = 1.0 / (windows_done as f64).sqrt();
                for m in 0..n_moves {
                    if window_tries[m] > 0 {
                        let rate = window_accepts[m] as f64 / window_tries[m] as f64;
                        log_steps[m] = (log_steps[m] + gain * (rate - cfg.target_accept)).clamp(MIN_LOG_STEP, MAX_LOG_STEP);
                    }
                }
            }
            window_accepts.iter_mut().for_each(|a| *a = 0);
            window_tries.iter_mut().for_each(|t| *t = 0);
            step_trace.push(log_steps.iter().map(|s| s.exp()).collect());
        }

        if !burning && (iter + 1 - cfg.burn_in).is_multiple_of(cfg.thin) {
            on_keep(&x);
        }
    }

    let rate = |m: usize| {
        if kept_tries[m] == 0 {
            f64::NAN
        } else {
            kept_accepts[m] as f64 / kept_tries[m] as f64
        }
    };
    EngineOutput {
        acceptance: (0..dim).map(rate).collect(),
        extra_acceptance: (dim..n_moves).map(rate).collect(),
        step_sizes: log_steps.iter().map(|s| s.exp()).collect(),
        step_trace,
        final_state: x,
    }
}

#[inline]
fn tally(
    m: usize,
    ok: bool,
    burning: bool,
    window_accepts: &mut [usize],
    window_tries: &mut [usize],
    kept_accepts: &mut [usize],
    kept_tries: &mut [usize],
) {
    window_tries[m] += 1;
    if ok {
        window_accepts[m] += 1;
    }
    if !burning {
        kept_tries[m] += 1;
        if ok {
            kept_accepts[m] += 1;
        }
    }
}
