//! Monte Carlo comparison of the estimators under study-level censoring.
//!
//! Each replicate draws `studies_per_drug` binomial counts per drug, then
//! within each drug censors the lowest counts at the largest censored
//! count, the way a "fewer than c events" reporting rule would.

use rand::Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{bmcd_report, level_pairs, run_comparator, Estimate, EstimateReport, GroupedCounts, Method};
use crate::exec::{map_indices, Execution};
use crate::model::{CensorStatus, CensoredBinomialModel, ModelSpec, StudyRecord};
use crate::rng::{stream, Purpose};
use crate::sampler::{run_keyed, SamplerConfig};
use crate::statfns::{mean, variance};

pub const DRUG_FACTOR: &str = "drug";
/// Scale of the Cauchy prior on each drug's logit incidence.
pub const DRUG_PRIOR_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_drugs: usize,
    pub studies_per_drug: usize,
    pub patients_per_study: u64,
    pub true_incidence: Vec<f64>,
    pub censor_fraction_per_drug: Vec<f64>,
    /// Replicates for the comparators.
    pub n_replicates: usize,
    /// Replicates for the Bayesian fit (the first `bmcd_replicates` datasets).
    pub bmcd_replicates: usize,
    pub seed: u64,
    pub bmcd_profile: SamplerConfig,
}

impl ScenarioConfig {
    /// `S1` (no censoring), `S2` (40%), `S3` (80%) or `S4` (0/40/80%).
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        let fractions = match name.to_ascii_uppercase().as_str() {
            "S1" => vec![0.0; 3],
            "S2" => vec![0.4; 3],
            "S3" => vec![0.8; 3],
            "S4" => vec![0.0, 0.4, 0.8],
            other => return invalid(format!("unknown scenario `{other}` (expected S1-S4)")),
        };
        Ok(ScenarioConfig {
            name: name.to_ascii_uppercase(),
            n_drugs: 3,
            studies_per_drug: 10,
            patients_per_study: 100,
            true_incidence: vec![0.025, 0.025, 0.013],
            censor_fraction_per_drug: fractions,
            n_replicates: 10_000,
            bmcd_replicates: 500,
            seed,
            bmcd_profile: SamplerConfig::desk(seed),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_drugs == 0 || self.studies_per_drug == 0 || self.patients_per_study == 0 {
            return invalid("drugs, studies per drug and patients per study must be positive");
        }
        if self.true_incidence.len() != self.n_drugs || self.censor_fraction_per_drug.len() != self.n_drugs {
            return invalid(format!("incidence and censoring vectors must have length {}", self.n_drugs));
        }
        if let Some(p) = self.true_incidence.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return invalid(format!("true incidence {p} outside (0, 1)"));
        }
        if let Some(f) = self.censor_fraction_per_drug.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return invalid(format!("censoring fraction {f} outside [0, 1]"));
        }
        if self.n_replicates == 0 {
            return invalid("at least one replicate is required");
        }
        self.bmcd_profile.validate()
    }

    pub fn parameters(&self) -> Vec<Parameter> {
        let mut params: Vec<Parameter> = (0..self.n_drugs)
            .map(|k| Parameter {
                name: format!("d_{}", k + 1),
                truth: self.true_incidence[k],
                pct_missing: format!("{}", self.censored_count(k) as f64 / self.studies_per_drug as f64 * 100.0),
                kind: ParameterKind::Incidence(k),
            })
            .collect();
        let odds = |p: f64| p / (1.0 - p);
        for (a, b) in level_pairs(self.n_drugs) {
            params.push(Parameter {
                name: format!("OR_{}{}", a + 1, b + 1),
                truth: odds(self.true_incidence[a]) / odds(self.true_incidence[b]),
                pct_missing: format!("{}/{}", params[a].pct_missing, params[b].pct_missing),
                kind: ParameterKind::OddsRatio(a, b),
            });
        }
        params
    }

    fn censored_count(&self, drug: usize) -> usize {
        censored_count(self.censor_fraction_per_drug[drug], self.studies_per_drug)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterKind {
    Incidence(usize),
    OddsRatio(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub truth: f64,
    /// Percent of censored studies, `a/b` for odds ratios.
    pub pct_missing: String,
    pub kind: ParameterKind,
}

impl Parameter {
    pub fn pick<'a>(&self, report: &'a EstimateReport) -> Option<&'a Estimate> {
        match self.kind {
            ParameterKind::Incidence(k) => report.incidences.get(k)?.as_ref(),
            ParameterKind::OddsRatio(a, b) => report.odds_ratio(a, b),
        }
    }
}

fn censored_count(fraction: f64, studies: usize) -> usize {
    ((fraction * studies as f64 - 1e-9).ceil().max(0.0) as usize).min(studies)
}

/// Censoring status of each count: the `ceil(fraction * len)` smallest
/// (ties by position) become left-censored at the largest of them.
pub fn censor_lowest(counts: &[u64], fraction: f64) -> Vec<CensorStatus> {
    let m = censored_count(fraction, counts.len());
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| (counts[i], i));
    let mut status: Vec<CensorStatus> = counts.iter().map(|&y| CensorStatus::Observed { y }).collect();
    if m > 0 {
        let c = counts[order[m - 1]];
        for &i in &order[..m] {
            status[i] = CensorStatus::LeftCensored { c };
        }
    }
    status
}

/// Dataset for one replicate; a pure function of `(seed, replicate)`.
pub fn generate_replicate(config: &ScenarioConfig, replicate: u64) -> Result<Vec<StudyRecord>> {
    config.validate()?;
    let mut rng = stream(config.seed, Purpose::Data, replicate, 0);
    let mut records = Vec::with_capacity(config.n_drugs * config.studies_per_drug);
    for k in 0..config.n_drugs {
        let dist = Binomial::new(config.patients_per_study, config.true_incidence[k])
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let counts: Vec<u64> = (0..config.studies_per_drug).map(|_| rng.sample(dist)).collect();
        for (j, outcome) in censor_lowest(&counts, config.censor_fraction_per_drug[k]).into_iter().enumerate() {
            records.push(
                StudyRecord::new(format!("d{}s{}", k + 1, j + 1), config.patients_per_study, outcome)
                    .with_level(DRUG_FACTOR, (k + 1).to_string()),
            );
        }
    }
    Ok(records)
}

/// Bayesian fit of one simulated dataset with independent Cauchy priors
/// on each drug's logit incidence.
pub fn bmcd_estimate(records: Vec<StudyRecord>, profile: &SamplerConfig, replicate: u64) -> Result<EstimateReport> {
    let model = CensoredBinomialModel::new(records, ModelSpec::independent_cauchy(DRUG_FACTOR, DRUG_PRIOR_SCALE))?;
    let fit = run_keyed(&model, profile, replicate, Execution::Sequential)?;
    bmcd_report(&model, &fit, DRUG_FACTOR)
}

pub fn estimate(method: Method, records: &[StudyRecord], config: &ScenarioConfig, replicate: u64) -> Result<EstimateReport> {
    match method {
        Method::Bmcd => bmcd_estimate(records.to_vec(), &config.bmcd_profile, replicate),
        m => run_comparator(m, &GroupedCounts::from_records(records, DRUG_FACTOR)?),
    }
}

/// One method's result for one parameter in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawEstimate {
    pub replicate: u64,
    pub method: Method,
    pub parameter: String,
    pub estimate: Option<Estimate>,
    pub covered: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCell {
    pub parameter: String,
    pub truth: f64,
    pub pct_missing: String,
    pub method: Method,
    pub cp: f64,
    pub mad: f64,
    pub rmse: f64,
    pub mean_pe: f64,
    pub mean_se: f64,
    pub var_pe: f64,
    pub n_ok: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub cells: Vec<MetricCell>,
}

impl MetricsReport {
    pub fn cell(&self, method: Method, parameter: &str) -> Option<&MetricCell> {
        self.cells.iter().find(|c| c.method == method && c.parameter == parameter)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub metrics: MetricsReport,
    pub raw: Vec<RawEstimate>,
}

fn replicate_estimates(config: &ScenarioConfig, methods: &[Method], params: &[Parameter], replicate: u64) -> Vec<RawEstimate> {
    let records = generate_replicate(config, replicate).expect("config validated before dispatch");
    let mut out = Vec::new();
    for &method in methods {
        if method == Method::Bmcd && replicate >= config.bmcd_replicates as u64 {
            continue;
        }
        match estimate(method, &records, config, replicate) {
            Ok(report) => out.extend(params.iter().map(|p| {
                let est = p.pick(&report).copied();
                RawEstimate {
                    replicate,
                    method,
                    parameter: p.name.clone(),
                    estimate: est,
                    covered: est.map(|e| e.covers(p.truth)),
                    error: est.is_none().then(|| "parameter not estimable".to_string()),
                }
            })),
            Err(e) => {
                log::warn!("{} replicate {replicate}: {method} failed: {e}", config.name);
                out.extend(params.iter().map(|p| RawEstimate {
                    replicate,
                    method,
                    parameter: p.name.clone(),
                    estimate: None,
                    covered: None,
                    error: Some(e.to_string()),
                }));
            }
        }
    }
    out
}

/// Aggregates raw estimates into one cell per (parameter, method).
pub fn aggregate(config: &ScenarioConfig, methods: &[Method], raw: &[RawEstimate]) -> MetricsReport {
    let mut cells = Vec::new();
    for p in config.parameters() {
        for &method in methods {
            let rows: Vec<&RawEstimate> = raw.iter().filter(|r| r.method == method && r.parameter == p.name).collect();
            let ok: Vec<&Estimate> = rows.iter().filter_map(|r| r.estimate.as_ref()).collect();
            let pe: Vec<f64> = ok.iter().map(|e| e.estimate).collect();
            let nan_if_empty = |v: f64| if ok.is_empty() { f64::NAN } else { v };
            let count = ok.len() as f64;
            cells.push(MetricCell {
                parameter: p.name.clone(),
                truth: p.truth,
                pct_missing: p.pct_missing.clone(),
                method,
                cp: nan_if_empty(ok.iter().filter(|e| e.covers(p.truth)).count() as f64 / count),
                mad: nan_if_empty(pe.iter().map(|x| (x - p.truth).abs()).sum::<f64>() / count),
                rmse: nan_if_empty((pe.iter().map(|x| (x - p.truth).powi(2)).sum::<f64>() / count).sqrt()),
                mean_pe: nan_if_empty(mean(&pe)),
                mean_se: nan_if_empty(ok.iter().map(|e| e.se).sum::<f64>() / count),
                var_pe: if pe.len() > 1 { variance(&pe) } else { f64::NAN },
                n_ok: ok.len(),
                n_excluded: rows.len() - ok.len(),
            });
        }
    }
    MetricsReport { scenario: config.name.clone(), cells }
}

/// Runs every replicate of a scenario for the requested methods.
pub fn run_scenario(config: &ScenarioConfig, methods: &[Method], exec: Execution) -> Result<ScenarioOutput> {
    config.validate()?;
    if methods.is_empty() {
        return invalid("no methods requested");
    }
    let params = config.parameters();
    let n = if methods.iter().all(|m| *m == Method::Bmcd) {
        config.bmcd_replicates.min(config.n_replicates)
    } else {
        config.n_replicates
    };
    let raw: Vec<RawEstimate> =
        map_indices(n, exec, |r| replicate_estimates(config, methods, &params, r as u64)).into_iter().flatten().collect();
    Ok(ScenarioOutput { metrics: aggregate(config, methods, &raw), raw })
}

/// Ratio `var(reference) / var(censored)` of one method's point estimates,
/// so values below 1 mean the censored scenario lost information.
pub fn relative_efficiency(censored: &MetricsReport, reference: &MetricsReport, method: Method, parameter: &str) -> Result<f64> {
    let var = |r: &MetricsReport| {
        r.cell(method, parameter)
            .map(|c| c.var_pe)
            .ok_or_else(|| Error::InvalidArgument(format!("{} has no {method} cell for `{parameter}`", r.scenario)))
    };
    Ok(var(reference)? / var(censored)?)
}
