//! Command-line flags, the optional TOML config file, and the resolved
//! configuration echoed to `run_manifest.json`.

use std::path::{Path, PathBuf};

use censored_meta::estimators::Method;
use censored_meta::model::{DEFAULT_HYPER_MEAN_SD, DEFAULT_SCALE_PRIOR};
use censored_meta::simulation::ScenarioConfig;
use censored_meta::SamplerConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_FACTORS: [&str; 3] = ["study", "drug_dose", "cancer_type"];
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "censored-meta", version, about = "Meta-analysis of rare events with censored study counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML file with any of the options below; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Fit,
    Simulate,
    Compare,
    Diagnose,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the hierarchical model to a study CSV.
    Fit(Options),
    /// Run the Monte Carlo scenarios.
    Simulate(Options),
    /// Run the Bayesian model and the comparators on one dataset.
    Compare(Options),
    /// Convergence diagnostics for chains written by `fit`.
    Diagnose(Options),
}

impl Command {
    pub fn kind(&self) -> CommandKind {
        match self {
            Command::Fit(_) => CommandKind::Fit,
            Command::Simulate(_) => CommandKind::Simulate,
            Command::Compare(_) => CommandKind::Compare,
            Command::Diagnose(_) => CommandKind::Diagnose,
        }
    }

    pub fn options(&self) -> &Options {
        match self {
            Command::Fit(o) | Command::Simulate(o) | Command::Compare(o) | Command::Diagnose(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

/// Every option, as given on the command line or in the config file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Options {
    /// Study CSV (fit, compare) or a fit output directory (diagnose).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated factor columns; `study` falls back to `study_id`.
    #[arg(long, value_delimiter = ',')]
    pub factors: Option<Vec<String>>,
    /// Factor whose levels are reported in forest.csv and estimates.csv.
    #[arg(long)]
    pub group_by: Option<String>,
    /// Scale of the half-Cauchy prior on each factor's standard deviation.
    #[arg(long = "scale-A")]
    #[serde(rename = "scale-A")]
    pub scale_a: Option<f64>,
    /// Standard deviation of the normal prior on each factor mean.
    #[arg(long)]
    pub hyper_mean_sd: Option<f64>,
    /// Fix every factor mean at zero instead of estimating it.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub fix_hyper_means: Option<bool>,
    /// Link function (only `logit` is supported).
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Kept draws per chain.
    #[arg(long)]
    pub kept: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Sampler length preset; explicit chain options override it.
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Comma-separated scenarios S1-S4.
    #[arg(long, value_delimiter = ',')]
    pub scenario: Option<Vec<String>>,
    /// Per-drug censoring fractions for a custom scenario, e.g. 0,0.4,0.8.
    #[arg(long, value_delimiter = ',', conflicts_with = "scenario")]
    pub fractions: Option<Vec<f64>>,
    /// Replicates for the comparators.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Replicates for the Bayesian fit.
    #[arg(long)]
    pub bmcd_replicates: Option<usize>,
    /// Comma-separated subset of bmcd,pem,nam,lrm,rve.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

impl Options {
    /// Fills every unset option from `other`.
    pub fn or(self, other: Options) -> Options {
        macro_rules! pick {
            ($($f:ident),*) => { Options { $($f: self.$f.or(other.$f)),* } };
        }
        pick!(
            input, out, factors, group_by, scale_a, hyper_mean_sd, fix_hyper_means, link, chains, burn_in, kept, thin, seed, profile,
            scenario, fractions, replicates, bmcd_replicates, methods
        )
    }

    pub fn from_toml_file(path: &Path) -> Result<Options, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Scenario to simulate: a preset name or custom fractions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioChoice {
    pub name: String,
    pub fractions: Vec<f64>,
}

/// The effective configuration of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub factors: Vec<String>,
    pub group_by: String,
    pub scale_a: f64,
    pub hyper_mean_sd: f64,
    pub fix_hyper_means: bool,
    pub link: String,
    pub sampler: SamplerConfig,
    pub scenarios: Vec<ScenarioChoice>,
    pub replicates: usize,
    pub bmcd_replicates: usize,
    pub methods: Vec<Method>,
}

fn positive(name: &str, v: Option<usize>) -> Result<Option<usize>, CliError> {
    match v {
        Some(0) => Err(CliError::Usage(format!("--{name} must be at least 1"))),
        other => Ok(other),
    }
}

impl RunConfig {
    pub fn resolve(command: CommandKind, opts: Options) -> Result<RunConfig, CliError> {
        let seed = opts.seed.unwrap_or(DEFAULT_SEED);
        let default_profile = if command == CommandKind::Simulate { Profile::Desk } else { Profile::Paper };
        let mut sampler = match opts.profile.unwrap_or(default_profile) {
            Profile::Paper => SamplerConfig::paper(seed),
            Profile::Desk => SamplerConfig::desk(seed),
        };
        if let Some(v) = positive("chains", opts.chains)? {
            sampler.n_chains = v;
        }
        if let Some(v) = positive("burn-in", opts.burn_in)? {
            sampler.burn_in = v;
        }
        if let Some(v) = positive("kept", opts.kept)? {
            sampler.kept_per_chain = v;
        }
        if let Some(v) = positive("thin", opts.thin)? {
            sampler.thin = v;
        }

        let factors = opts.factors.unwrap_or_else(|| DEFAULT_FACTORS.iter().map(|s| s.to_string()).collect());
        if factors.is_empty() || factors.iter().any(|f| f.trim().is_empty()) {
            return Err(CliError::Usage("--factors needs at least one non-empty name".into()));
        }
        let group_by = match opts.group_by {
            Some(g) if !factors.contains(&g) => {
                return Err(CliError::Usage(format!("--group-by {g} is not one of the factors")));
            }
            Some(g) => g,
            None if factors.iter().any(|f| f == "drug_dose") => "drug_dose".into(),
            None => factors[0].clone(),
        };
        let link = opts.link.unwrap_or_else(|| "logit".into());
        if link != "logit" {
            return Err(CliError::Usage(format!("unsupported link `{link}` (only logit)")));
        }
        let scale_a = opts.scale_a.unwrap_or(DEFAULT_SCALE_PRIOR);
        let hyper_mean_sd = opts.hyper_mean_sd.unwrap_or(DEFAULT_HYPER_MEAN_SD);
        if !(scale_a > 0.0 && scale_a.is_finite()) || !(hyper_mean_sd > 0.0 && hyper_mean_sd.is_finite()) {
            return Err(CliError::Usage("--scale-A and --hyper-mean-sd must be positive".into()));
        }

        let scenarios = match (opts.scenario, opts.fractions) {
            (_, Some(fractions)) => vec![ScenarioChoice { name: "custom".into(), fractions }],
            (Some(names), None) => names
                .iter()
                .map(|n| {
                    let preset = ScenarioConfig::preset(n, seed).map_err(|e| CliError::Usage(e.to_string()))?;
                    Ok(ScenarioChoice { name: preset.name, fractions: preset.censor_fraction_per_drug })
                })
                .collect::<Result<_, CliError>>()?,
            (None, None) => ["S1", "S2", "S3", "S4"]
                .iter()
                .map(|n| {
                    let preset = ScenarioConfig::preset(n, seed).expect("built-in preset");
                    ScenarioChoice { name: preset.name, fractions: preset.censor_fraction_per_drug }
                })
                .collect(),
        };
        let replicates = positive("replicates", opts.replicates)?.unwrap_or(10_000);
        let bmcd_replicates = positive("bmcd-replicates", opts.bmcd_replicates)?.unwrap_or(500);

        let methods = match opts.methods {
            Some(list) => {
                let mut methods = Vec::new();
                for m in list {
                    let m: Method = m.parse().map_err(|e: censored_meta::Error| CliError::Usage(e.to_string()))?;
                    if !methods.contains(&m) {
                        methods.push(m);
                    }
                }
                if methods.is_empty() {
                    return Err(CliError::Usage("--methods is empty".into()));
                }
                methods
            }
            None => Method::ALL.to_vec(),
        };

        if matches!(command, CommandKind::Fit | CommandKind::Compare | CommandKind::Diagnose) && opts.input.is_none() {
            return Err(CliError::Usage("--input is required".into()));
        }

        Ok(RunConfig {
            command,
            input: opts.input,
            output_dir: opts.out.unwrap_or_else(|| PathBuf::from("out")),
            factors,
            group_by,
            scale_a,
            hyper_mean_sd,
            fix_hyper_means: opts.fix_hyper_means.unwrap_or(false),
            link,
            sampler,
            scenarios,
            replicates,
            bmcd_replicates,
            methods,
        })
    }

    pub fn scenario_config(&self, choice: &ScenarioChoice) -> Result<ScenarioConfig, CliError> {
        let base = ScenarioConfig::preset("S1", self.sampler.seed).expect("built-in preset");
        let config = ScenarioConfig {
            name: choice.name.clone(),
            censor_fraction_per_drug: choice.fractions.clone(),
            n_replicates: self.replicates,
            bmcd_replicates: self.bmcd_replicates,
            bmcd_profile: self.sampler,
            ..base
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}
