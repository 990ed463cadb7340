//! MCMC over the censored-binomial model: chains, summaries and DIC.

pub mod diagnostics;
pub mod engine;
mod model_target;

use std::io::{self, Write};

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_indices, Execution};
use crate::model::{CensorStatus, CensoredBinomialModel, Coordinate, PriorKind};
use crate::rng::{stream, Purpose};
use crate::statfns::{self, inv_logit, logit, quantile_sorted};

pub use diagnostics::{effective_sample_size, split_rhat};
use engine::EngineConfig;
use model_target::ModelTarget;

/// R̂ above this is reported as a convergence failure.
pub const RHAT_THRESHOLD: f64 = 1.05;
const INIT_ATTEMPTS: usize = 100;
const INIT_JITTER: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    pub burn_in: usize,
    pub kept_per_chain: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub target_accept: f64,
}

impl SamplerConfig {
    /// Three chains, 30,000 burn-in, thin 3, 10,000 kept per chain.
    pub fn paper(seed: u64) -> Self {
        SamplerConfig {
            n_chains: 3,
            burn_in: 30_000,
            kept_per_chain: 10_000,
            thin: 3,
            seed,
            adapt_window: 50,
            target_accept: 0.44,
        }
    }

    /// Short profile for running thousands of fits.
    pub fn desk(seed: u64) -> Self {
        SamplerConfig { burn_in: 3_000, kept_per_chain: 2_000, thin: 1, ..SamplerConfig::paper(seed) }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_chains", self.n_chains),
            ("burn_in", self.burn_in),
            ("kept_per_chain", self.kept_per_chain),
            ("thin", self.thin),
            ("adapt_window", self.adapt_window),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be at least 1")));
            }
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument(format!("target_accept {} outside (0, 1)", self.target_accept)));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::paper(1)
    }
}

/// Kept draws of one chain. Scales are stored on their natural scale.
#[derive(Debug, Clone)]
pub struct Chain {
    pub param_names: Vec<String>,
    /// Row-major `[kept × n_params]`.
    pub draws: Vec<f64>,
    pub acceptance_rates: Vec<f64>,
    pub extra_moves: Vec<(String, f64)>,
    pub deviance_draws: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub step_trace: Vec<Vec<f64>>,
}

impl Chain {
    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn n_draws(&self) -> usize {
        self.deviance_draws.len()
    }

    pub fn draw(&self, i: usize) -> &[f64] {
        let p = self.n_params();
        &self.draws[i * p..(i + 1) * p]
    }

    pub fn column(&self, param: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|i| self.draw(i)[param]).collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// One row per kept draw, one column per parameter, then `deviance`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<&str> = self.param_names.iter().map(String::as_str).chain(["deviance"]).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n_draws() {
            let row: Vec<String> =
                self.draw(i).iter().chain([&self.deviance_draws[i]]).map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Pooled incidence of observed studies, continuity corrected; falls back
/// to censoring-interval midpoints when nothing is observed.
fn starting_incidence(model: &CensoredBinomialModel) -> f64 {
    let (mut events, mut trials) = (0.0, 0.0);
    for r in model.records() {
        if let CensorStatus::Observed { y } = r.outcome {
            events += y as f64;
            trials += r.n as f64;
        }
    }
    if trials == 0.0 {
        for r in model.records() {
            let n = r.n as f64;
            events += match r.outcome {
                CensorStatus::LeftCensored { c } => c.min(r.n) as f64 / 2.0,
                CensorStatus::RightCensored { c } => (c as f64 + n) / 2.0,
                CensorStatus::IntervalCensored { a, b } => (a + b) as f64 / 2.0,
                CensorStatus::Observed { y } => y as f64,
            };
            trials += n;
        }
    }
    ((events + 0.5) / (trials + 1.0)).clamp(1e-6, 1.0 - 1e-6)
}

fn initial_state(model: &CensoredBinomialModel, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let spec = model.spec();
    let base = logit(starting_incidence(model)).expect("clamped into (0, 1)");
    let free_means = model.layout().iter().filter(|l| l.hyper_mean.is_some()).count().max(1) as f64;
    let mut jitter = || INIT_JITTER * rng.sample::<f64, _>(StandardNormal);
    let mut x = vec![0.0; model.dim()];
    for (i, coord) in model.coordinates().iter().enumerate() {
        x[i] = match (coord, spec.prior) {
            (Coordinate::HyperMean { .. }, _) => base / free_means + jitter(),
            (Coordinate::LogScale { .. }, _) => (0.1 * spec.scale_prior_scale).ln() + jitter(),
            (Coordinate::Effect { .. }, PriorKind::Hierarchical) => jitter(),
            (Coordinate::Effect { .. }, PriorKind::IndependentCauchy { .. }) => base + jitter(),
        };
    }
    x
}

/// Runs one chain; `replicate` keys the random stream alongside the seed and
/// chain index.
pub fn run_chain_keyed(
    model: &CensoredBinomialModel,
    config: &SamplerConfig,
    replicate: u64,
    chain_index: usize,
) -> Result<Chain> {
    config.validate()?;
    if model.dim() == 0 {
        return Err(Error::Spec("model has no parameters".into()));
    }
    let mut rng = stream(config.seed, Purpose::Chain, replicate, chain_index as u64);
    let target = ModelTarget::new(model);

    let mut x0 = None;
    for _ in 0..INIT_ATTEMPTS {
        let candidate = initial_state(model, &mut rng);
        if model.flat_log_density(&candidate).is_finite() {
            x0 = Some(candidate);
            break;
        }
    }
    let x0 = x0.ok_or(Error::Initialization { chain: chain_index, attempts: INIT_ATTEMPTS })?;

    let engine_cfg = EngineConfig {
        burn_in: config.burn_in,
        kept: config.kept_per_chain,
        thin: config.thin,
        adapt_window: config.adapt_window,
        target_accept: config.target_accept,
        initial_step: 0.5,
    };
    let n_params = model.dim();
    let mut draws = Vec::with_capacity(config.kept_per_chain * n_params);
    let mut deviance_draws = Vec::with_capacity(config.kept_per_chain);
    let mut etas = vec![0.0; model.records().len()];
    let out = engine::run(&target, x0, &engine_cfg, &mut rng, |x| {
        draws.extend(model.draw_from_flat(x));
        for (j, eta) in etas.iter_mut().enumerate() {
            *eta = model.flat_linear_predictor(x, j);
        }
        deviance_draws.push(-2.0 * model.log_likelihood_at(&etas));
    });

    Ok(Chain {
        param_names: model.param_names().to_vec(),
        draws,
        acceptance_rates: out.acceptance,
        extra_moves: target.extra_move_names().into_iter().zip(out.extra_acceptance).collect(),
        deviance_draws,
        step_sizes: out.step_sizes,
        step_trace: out.step_trace,
    })
}

pub fn run_chain(model: &CensoredBinomialModel, config: &SamplerConfig, chain_index: usize) -> Result<Chain> {
    run_chain_keyed(model, config, 0, chain_index)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub rhat: f64,
    pub ess: f64,
}

/// Summary of a per-chain series of draws of one quantity.
pub fn summarize_quantity(name: impl Into<String>, per_chain: &[Vec<f64>]) -> ParameterSummary {
    let mut pooled: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let mean = statfns::mean(&pooled);
    let sd = statfns::variance(&pooled).sqrt();
    pooled.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.into(),
        mean,
        sd,
        median: quantile_sorted(&pooled, 0.5),
        q025: quantile_sorted(&pooled, 0.025),
        q975: quantile_sorted(&pooled, 0.975),
        rhat: split_rhat(per_chain),
        ess: effective_sample_size(per_chain),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dic {
    pub dic: f64,
    pub pd: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub parameters: Vec<ParameterSummary>,
    pub dic: f64,
    pub pd: f64,
    pub total_draws: usize,
    /// Quantities whose R̂ exceeds [`RHAT_THRESHOLD`].
    pub flagged: Vec<String>,
}

impl PosteriorSummary {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Deviance information criterion from the exact censored likelihood.
///
/// `D(θ̄)` plugs in the posterior mean of each study's linear predictor;
/// the deviance is convex in that predictor, so `pd >= 0`.
pub fn compute_dic(chains: &[Chain], model: &CensoredBinomialModel) -> Dic {
    let n_studies = model.records().len();
    let total: usize = chains.iter().map(Chain::n_draws).sum();
    let mean_deviance = chains.iter().flat_map(|c| c.deviance_draws.iter()).sum::<f64>() / total as f64;
    let mut eta_bar = vec![0.0; n_studies];
    for chain in chains {
        for i in 0..chain.n_draws() {
            let state = model.state_from_draw(chain.draw(i));
            for (j, acc) in eta_bar.iter_mut().enumerate() {
                *acc += model.linear_predictor(&state, j);
            }
        }
    }
    eta_bar.iter_mut().for_each(|e| *e /= total as f64);
    let deviance_at_mean = -2.0 * model.log_likelihood_at(&eta_bar);
    let pd = mean_deviance - deviance_at_mean;
    Dic { dic: mean_deviance + pd, pd, mean_deviance, deviance_at_mean }
}

/// Per-level incidence of block `b`: the level effect plus every other
/// block's hyper-mean, on the probability scale.
pub fn level_incidence(model: &CensoredBinomialModel, draw: &[f64], block: usize, level: usize) -> f64 {
    inv_logit(level_logit(model, draw, block, level))
}

pub fn level_logit(model: &CensoredBinomialModel, draw: &[f64], block: usize, level: usize) -> f64 {
    let layout = model.layout();
    let mut eta = 0.0;
    for (b, lay) in layout.iter().enumerate() {
        let mu = lay.hyper_mean.map_or(0.0, |m| draw[m]);
        if b == block {
            let z = draw[lay.effects_start + level];
            eta += match lay.log_scale {
                Some(s) => mu + draw[s] * z,
                None => z,
            };
        } else {
            eta += mu;
        }
    }
    eta
}

/// Derived quantities reported next to the sampled parameters.
pub fn derived_quantities(model: &CensoredBinomialModel) -> Vec<String> {
    let mut names = vec!["incidence.overall".to_string()];
    if model.spec().is_hierarchical() {
        names.push("incidence.typical".to_string());
    }
    for block in model.blocks() {
        for level in &block.levels {
            names.push(format!("theta.{}[{level}]", block.name));
        }
    }
    names
}

fn derived_values(model: &CensoredBinomialModel, draw: &[f64]) -> Vec<f64> {
    let state = model.state_from_draw(draw);
    let total_n: f64 = model.records().iter().map(|r| r.n as f64).sum();
    let overall = model
        .records()
        .iter()
        .enumerate()
        .map(|(j, r)| r.n as f64 * inv_logit(model.linear_predictor(&state, j)))
        .sum::<f64>()
        / total_n;
    let mut values = vec![overall];
    if model.spec().is_hierarchical() {
        values.push(inv_logit(state.blocks.iter().map(|b| b.hyper_mean).sum()));
    }
    for (b, block) in model.blocks().iter().enumerate() {
        for l in 0..block.levels.len() {
            values.push(level_incidence(model, draw, b, l));
        }
    }
    values
}

pub fn summarize(chains: &[Chain], model: &CensoredBinomialModel) -> PosteriorSummary {
    let n_params = model.dim();
    let mut parameters: Vec<ParameterSummary> = (0..n_params)
        .map(|p| {
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.column(p)).collect();
            summarize_quantity(model.param_names()[p].clone(), &per_chain)
        })
        .collect();

    let derived_names = derived_quantities(model);
    let mut derived: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); chains.len()]; derived_names.len()];
    for (c, chain) in chains.iter().enumerate() {
        for i in 0..chain.n_draws() {
            for (q, v) in derived_values(model, chain.draw(i)).into_iter().enumerate() {
                derived[q][c].push(v);
            }
        }
    }
    parameters.extend(derived_names.into_iter().zip(&derived).map(|(name, per_chain)| summarize_quantity(name, per_chain)));

    let dic = compute_dic(chains, model);
    let flagged = parameters.iter().filter(|p| p.rhat > RHAT_THRESHOLD).map(|p| p.name.clone()).collect();
    PosteriorSummary {
        parameters,
        dic: dic.dic,
        pd: dic.pd,
        total_draws: chains.iter().map(Chain::n_draws).sum(),
        flagged,
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub chains: Vec<Chain>,
    pub summary: PosteriorSummary,
}

/// Runs every chain (in parallel when enabled) and summarizes them.
pub fn run_with(model: &CensoredBinomialModel, config: &SamplerConfig, exec: Execution) -> Result<FitOutput> {
    run_keyed(model, config, 0, exec)
}

pub fn run(model: &CensoredBinomialModel, config: &SamplerConfig) -> Result<FitOutput> {
    run_with(model, config, Execution::default())
}

pub fn run_keyed(
    model: &CensoredBinomialModel,
    config: &SamplerConfig,
    replicate: u64,
    exec: Execution,
) -> Result<FitOutput> {
    config.validate()?;
    let results = map_indices(config.n_chains, exec, |c| run_chain_keyed(model, config, replicate, c));
    let mut chains = Vec::with_capacity(results.len());
    let mut last_err = None;
    for (c, r) in results.into_iter().enumerate() {
        match r {
            Ok(chain) => chains.push(chain),
            Err(e) => {
                warn!("chain {c} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    if chains.is_empty() {
        return Err(match last_err {
            Some(e @ Error::Spec(_)) => e,
            _ => Error::AllChainsFailed(config.n_chains),
        });
    }
    let summary = summarize(&chains, model);
    for name in &summary.flagged {
        warn!("R-hat above {RHAT_THRESHOLD} for {name}");
    }
    Ok(FitOutput { chains, summary })
}
