//! Study records, the censored-binomial likelihood and the crossed
//! random-effects logit model.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::statfns::{
    self, ln_choose, ln_reg_inc_beta_parts, log1m_exp, log_cauchy, log_normal, log_sum_exp_unchecked,
    log_theta_pair, LogProb,
};

/// Linear predictors are clamped to this magnitude before use.
pub const MAX_LINEAR_PREDICTOR: f64 = 700.0;

/// What a study reports about its event count `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CensorStatus {
    /// `Y = y`.
    Observed { y: u64 },
    /// `Y ∈ [0, c]`.
    LeftCensored { c: u64 },
    /// `Y ∈ (c, n]`.
    RightCensored { c: u64 },
    /// `Y ∈ (a, b]`.
    IntervalCensored { a: u64, b: u64 },
}

impl CensorStatus {
    pub fn is_censored(&self) -> bool {
        !matches!(self, CensorStatus::Observed { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            CensorStatus::Observed { .. } => "observed",
            CensorStatus::LeftCensored { .. } => "left",
            CensorStatus::RightCensored { .. } => "right",
            CensorStatus::IntervalCensored { .. } => "interval",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub n: u64,
    pub outcome: CensorStatus,
    pub factor_levels: BTreeMap<String, String>,
}

impl StudyRecord {
    pub fn new(study_id: impl Into<String>, n: u64, outcome: CensorStatus) -> Self {
        StudyRecord { study_id: study_id.into(), n, outcome, factor_levels: BTreeMap::new() }
    }

    pub fn with_level(mut self, factor: impl Into<String>, level: impl Into<String>) -> Self {
        self.factor_levels.insert(factor.into(), level.into());
        self
    }

    fn reject(&self, reason: impl Into<String>) -> Error {
        Error::InvalidRecord { study_id: self.study_id.clone(), reason: reason.into() }
    }

    /// Checks the outcome bounds against `n`.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(self.reject("sample size must be at least 1"));
        }
        let n = self.n;
        match self.outcome {
            CensorStatus::Observed { y } if y > n => Err(self.reject(format!("observed count {y} exceeds n={n}"))),
            CensorStatus::LeftCensored { c } if c > n => Err(self.reject(format!("left cutoff {c} exceeds n={n}"))),
            CensorStatus::RightCensored { c } if c >= n => {
                Err(self.reject(format!("right cutoff {c} must be below n={n}")))
            }
            CensorStatus::IntervalCensored { a, b } if a >= b || b > n => {
                Err(self.reject(format!("interval ({a}, {b}] invalid for n={n}")))
            }
            _ => Ok(()),
        }
    }

    /// A left-censored record whose cutoff covers the whole support carries
    /// no information about θ.
    pub fn is_uninformative(&self) -> bool {
        matches!(self.outcome, CensorStatus::LeftCensored { c } if c >= self.n)
    }

    pub fn level(&self, factor: &str) -> Option<&str> {
        self.factor_levels.get(factor).map(String::as_str)
    }
}

/// Per-record constants for fast repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub(crate) struct PreparedStudy {
    n: f64,
    kind: PreparedKind,
}

#[derive(Debug, Clone)]
enum PreparedKind {
    Observed { y: f64, ln_choose: f64 },
    /// `ln C(n, k)` for `k = 0..=c`.
    Left { ln_choose: Vec<f64> },
    Right { c: u64, n: u64, ln_choose: Vec<f64> },
    /// `ln C(n, k)` for `k = a+1..=b`, with `first = a + 1`.
    Interval { first: u64, ln_choose: Vec<f64> },
    Constant,
}

fn ln_choose_range(n: u64, from: u64, to: u64) -> Vec<f64> {
    (from..=to).map(|k| ln_choose(n, k)).collect()
}

impl PreparedStudy {
    pub(crate) fn new(record: &StudyRecord) -> Self {
        let n = record.n;
        let kind = match record.outcome {
            CensorStatus::Observed { y } => PreparedKind::Observed { y: y as f64, ln_choose: ln_choose(n, y) },
            CensorStatus::LeftCensored { c } if c >= n => PreparedKind::Constant,
            CensorStatus::LeftCensored { c } => PreparedKind::Left { ln_choose: ln_choose_range(n, 0, c) },
            CensorStatus::RightCensored { c } => PreparedKind::Right { c, n, ln_choose: ln_choose_range(n, 0, c) },
            CensorStatus::IntervalCensored { a, b } => {
                PreparedKind::Interval { first: a + 1, ln_choose: ln_choose_range(n, a + 1, b.min(n)) }
            }
        };
        PreparedStudy { n: n as f64, kind }
    }

    fn term(&self, k: f64, ln_choose: f64, ln_theta: f64, ln_1m_theta: f64) -> f64 {
        let a = if k == 0.0 { 0.0 } else { k * ln_theta };
        let b = if self.n - k == 0.0 { 0.0 } else { (self.n - k) * ln_1m_theta };
        ln_choose + a + b
    }

    fn ln_cdf_terms(&self, table: &[f64], first: u64, ln_theta: f64, ln_1m_theta: f64) -> f64 {
        let terms = table
            .iter()
            .enumerate()
            .map(|(i, lc)| self.term((first + i as u64) as f64, *lc, ln_theta, ln_1m_theta));
        log_sum_exp_unchecked(terms)
    }

    /// Log-probability of the reported outcome given `(ln θ, ln(1-θ))`.
    pub(crate) fn log_prob(&self, ln_theta: f64, ln_1m_theta: f64) -> LogProb {
        match &self.kind {
            PreparedKind::Observed { y, ln_choose } => self.term(*y, *ln_choose, ln_theta, ln_1m_theta),
            PreparedKind::Left { ln_choose } => self.ln_cdf_terms(ln_choose, 0, ln_theta, ln_1m_theta).min(0.0),
            PreparedKind::Right { c, n, ln_choose } => {
                let ln_cdf = self.ln_cdf_terms(ln_choose, 0, ln_theta, ln_1m_theta).min(0.0);
                if ln_cdf < -std::f64::consts::LN_2 {
                    log1m_exp(ln_cdf)
                } else {
                    // upper tail summed directly keeps precision when F(c) ≈ 1
                    let mut lc = ln_choose[*c as usize];
                    let mut upper = Vec::with_capacity((n - c) as usize);
                    for k in (c + 1)..=*n {
                        lc += ((n - k + 1) as f64 / k as f64).ln();
                        upper.push(self.term(k as f64, lc, ln_theta, ln_1m_theta));
                    }
                    log_sum_exp_unchecked(upper.into_iter()).min(0.0)
                }
            }
            PreparedKind::Interval { first, ln_choose } => {
                self.ln_cdf_terms(ln_choose, *first, ln_theta, ln_1m_theta).min(0.0)
            }
            PreparedKind::Constant => 0.0,
        }
    }

    pub(crate) fn log_prob_at_logit(&self, eta: f64) -> LogProb {
        let (lt, l1m) = log_theta_pair(eta.clamp(-MAX_LINEAR_PREDICTOR, MAX_LINEAR_PREDICTOR));
        self.log_prob(lt, l1m)
    }
}

fn check_open_probability(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return invalid(format!("incidence {theta} outside (0, 1)"));
    }
    Ok(())
}

/// Exact log-likelihood contribution of one study at incidence `theta`.
pub fn study_logprob(record: &StudyRecord, theta: f64) -> Result<LogProb> {
    check_open_probability(theta)?;
    record.validate()?;
    Ok(PreparedStudy::new(record).log_prob(theta.ln(), (-theta).ln_1p()))
}

/// Censored contribution written as a Bernoulli indicator on the side of
/// the cutoff, with `p = F(c)` evaluated through the incomplete beta
/// function rather than by summing the pmf.
pub fn censored_term_logprob(record: &StudyRecord, theta: f64) -> Result<LogProb> {
    check_open_probability(theta)?;
    record.validate()?;
    let n = record.n as f64;
    let one_minus = 1.0 - theta;
    // P(Y <= c) = I_{1-θ}(n - c, c + 1);  P(Y > c) = I_θ(c + 1, n - c)
    let ln_cdf = |c: u64| -> f64 {
        if c >= record.n {
            0.0
        } else {
            ln_reg_inc_beta_parts(n - c as f64, c as f64 + 1.0, one_minus, theta)
        }
    };
    let ln_sf = |c: u64| -> f64 {
        if c >= record.n {
            f64::NEG_INFINITY
        } else {
            ln_reg_inc_beta_parts(c as f64 + 1.0, n - c as f64, theta, one_minus)
        }
    };
    let value = match record.outcome {
        CensorStatus::Observed { .. } => {
            return invalid(format!("study {} is not censored", record.study_id));
        }
        // W = 1
        CensorStatus::LeftCensored { c } => ln_cdf(c),
        // W = 0
        CensorStatus::RightCensored { c } => ln_sf(c),
        CensorStatus::IntervalCensored { a, b } => {
            let upper_a = ln_sf(a);
            let upper_b = ln_sf(b);
            upper_a + log1m_exp((upper_b - upper_a).min(0.0))
        }
    };
    Ok(value.min(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
}

/// Prior family applied to every random-effect block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    /// `effect = μ + σ·z`, `z ~ N(0,1)`, `σ ~ C⁺(0, A)`, `μ ~ N(0, s²)`.
    Hierarchical,
    /// Each level effect independently `~ Cauchy(0, scale)`.
    IndependentCauchy { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub factors: Vec<String>,
    pub prior: PriorKind,
    /// Half-Cauchy scale `A` of the block standard deviations.
    pub scale_prior_scale: f64,
    /// Standard deviation of the normal prior on each block's hyper-mean.
    pub hyper_mean_sd: f64,
    /// Pin every hyper-mean at zero (zero-mean random effects).
    pub fix_hyper_means: bool,
    pub link: Link,
}

pub const DEFAULT_SCALE_PRIOR: f64 = 25.0;
pub const DEFAULT_HYPER_MEAN_SD: f64 = 100.0;

impl ModelSpec {
    pub fn hierarchical<S: Into<String>>(factors: impl IntoIterator<Item = S>) -> Self {
        ModelSpec {
            factors: factors.into_iter().map(Into::into).collect(),
            prior: PriorKind::Hierarchical,
            scale_prior_scale: DEFAULT_SCALE_PRIOR,
            hyper_mean_sd: DEFAULT_HYPER_MEAN_SD,
            fix_hyper_means: false,
            link: Link::Logit,
        }
    }

    pub fn independent_cauchy(factor: impl Into<String>, scale: f64) -> Self {
        ModelSpec { prior: PriorKind::IndependentCauchy { scale }, ..ModelSpec::hierarchical([factor]) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Spec("at least one factor is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for f in &self.factors {
            if !seen.insert(f) {
                return Err(Error::Spec(format!("factor {f} listed twice")));
            }
        }
        if !(self.scale_prior_scale > 0.0) {
            return Err(Error::Spec(format!("scale prior A must be positive, got {}", self.scale_prior_scale)));
        }
        if !(self.hyper_mean_sd > 0.0) {
            return Err(Error::Spec(format!("hyper-mean sd must be positive, got {}", self.hyper_mean_sd)));
        }
        if let PriorKind::IndependentCauchy { scale } = self.prior {
            if !(scale > 0.0) {
                return Err(Error::Spec(format!("Cauchy scale must be positive, got {scale}")));
            }
        }
        Ok(())
    }

    pub fn is_hierarchical(&self) -> bool {
        matches!(self.prior, PriorKind::Hierarchical)
    }
}

/// One random-effect block: its levels and which studies sit at each.
#[derive(Debug, Clone)]
pub struct Block {
    pub name: String,
    pub levels: Vec<String>,
    pub members: Vec<Vec<usize>>,
}

/// Where each block's parameters live in the flat sampler vector.
#[derive(Debug, Clone, Copy)]
pub struct BlockLayout {
    pub hyper_mean: Option<usize>,
    pub log_scale: Option<usize>,
    pub effects_start: usize,
    pub n_levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coordinate {
    HyperMean { block: usize },
    LogScale { block: usize },
    Effect { block: usize, level: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub hyper_mean: f64,
    pub scale: f64,
    /// Standardized effects for hierarchical blocks, raw effects otherwise.
    pub effects: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub blocks: Vec<BlockState>,
}

/// Study data bound to a model specification.
#[derive(Debug, Clone)]
pub struct CensoredBinomialModel {
    records: Vec<StudyRecord>,
    prepared: Vec<PreparedStudy>,
    spec: ModelSpec,
    blocks: Vec<Block>,
    /// `study_levels[j][b]` = level index of study `j` in block `b`.
    study_levels: Vec<Vec<usize>>,
    layout: Vec<BlockLayout>,
    coordinates: Vec<Coordinate>,
    param_names: Vec<String>,
}

impl CensoredBinomialModel {
    pub fn new(records: Vec<StudyRecord>, spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        for r in &records {
            r.validate()?;
        }
        let mut blocks: Vec<Block> = spec
            .factors
            .iter()
            .map(|f| Block { name: f.clone(), levels: Vec::new(), members: Vec::new() })
            .collect();
        let mut index: Vec<HashMap<String, usize>> = vec![HashMap::new(); blocks.len()];
        let mut study_levels = Vec::with_capacity(records.len());
        for (j, r) in records.iter().enumerate() {
            let mut row = Vec::with_capacity(blocks.len());
            for (b, block) in blocks.iter_mut().enumerate() {
                let label = r.level(&block.name).ok_or_else(|| Error::InvalidRecord {
                    study_id: r.study_id.clone(),
                    reason: format!("no level for factor {}", block.name),
                })?;
                let l = *index[b].entry(label.to_string()).or_insert_with(|| {
                    block.levels.push(label.to_string());
                    block.members.push(Vec::new());
                    block.levels.len() - 1
                });
                block.members[l].push(j);
                row.push(l);
            }
            study_levels.push(row);
        }

        let mut layout = Vec::with_capacity(blocks.len());
        let mut coordinates = Vec::new();
        let mut param_names = Vec::new();
        for (b, block) in blocks.iter().enumerate() {
            let mut hyper_mean = None;
            let mut log_scale = None;
            if spec.is_hierarchical() {
                if !spec.fix_hyper_means {
                    hyper_mean = Some(coordinates.len());
                    coordinates.push(Coordinate::HyperMean { block: b });
                    param_names.push(format!("mu.{}", block.name));
                }
                log_scale = Some(coordinates.len());
                coordinates.push(Coordinate::LogScale { block: b });
                param_names.push(format!("sigma.{}", block.name));
            }
            let effects_start = coordinates.len();
            let prefix = if spec.is_hierarchical() { "sn" } else { "beta" };
            for (l, level) in block.levels.iter().enumerate() {
                coordinates.push(Coordinate::Effect { block: b, level: l });
                param_names.push(format!("{prefix}.{}[{level}]", block.name));
            }
            layout.push(BlockLayout { hyper_mean, log_scale, effects_start, n_levels: block.levels.len() });
        }

        let prepared = records.iter().map(PreparedStudy::new).collect();
        Ok(CensoredBinomialModel { records, prepared, spec, blocks, study_levels, layout, coordinates, param_names })
    }

    pub fn records(&self) -> &[StudyRecord] {
        &self.records
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_index(&self, factor: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == factor)
    }

    pub fn layout(&self) -> &[BlockLayout] {
        &self.layout
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coordinates
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    /// Names of the sampled parameters, scales reported on their natural scale.
    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn study_levels(&self, study: usize) -> &[usize] {
        &self.study_levels[study]
    }

    /// True when no record carries information about any incidence.
    pub fn likelihood_is_constant(&self) -> bool {
        self.records.iter().all(StudyRecord::is_uninformative)
    }

    pub fn validate_state(&self, state: &ParameterState) -> Result<()> {
        if state.blocks.len() != self.blocks.len() {
            return invalid(format!("state has {} blocks, model has {}", state.blocks.len(), self.blocks.len()));
        }
        for (b, (bs, block)) in state.blocks.iter().zip(&self.blocks).enumerate() {
            if bs.effects.len() != block.levels.len() {
                return invalid(format!(
                    "block {b} has {} effects, expected {}",
                    bs.effects.len(),
                    block.levels.len()
                ));
            }
        }
        Ok(())
    }

    fn level_effect(&self, state: &ParameterState, b: usize, l: usize) -> f64 {
        let bs = &state.blocks[b];
        if self.spec.is_hierarchical() {
            bs.hyper_mean + bs.scale * bs.effects[l]
        } else {
            bs.effects[l]
        }
    }

    /// Linear predictor (logit incidence) of study `j`.
    pub fn linear_predictor(&self, state: &ParameterState, j: usize) -> f64 {
        self.study_levels[j]
            .iter()
            .enumerate()
            .map(|(b, &l)| self.level_effect(state, b, l))
            .sum::<f64>()
            .clamp(-MAX_LINEAR_PREDICTOR, MAX_LINEAR_PREDICTOR)
    }

    pub fn thetas(&self, state: &ParameterState) -> Vec<f64> {
        (0..self.records.len()).map(|j| statfns::inv_logit(self.linear_predictor(state, j))).collect()
    }

    /// Sum of exact per-study contributions at the state-implied incidences.
    pub fn log_likelihood(&self, state: &ParameterState) -> Result<LogProb> {
        self.validate_state(state)?;
        Ok(self.prepared.iter().enumerate().map(|(j, p)| p.log_prob_at_logit(self.linear_predictor(state, j))).sum())
    }

    /// Log-likelihood from explicit per-study linear predictors.
    pub fn log_likelihood_at(&self, linear_predictors: &[f64]) -> LogProb {
        self.prepared.iter().zip(linear_predictors).map(|(p, &eta)| p.log_prob_at_logit(eta)).sum()
    }

    pub fn log_prior(&self, state: &ParameterState) -> Result<LogProb> {
        self.validate_state(state)?;
        let mut total = 0.0;
        for bs in &state.blocks {
            match self.spec.prior {
                PriorKind::Hierarchical => {
                    if !(bs.scale > 0.0) {
                        return Ok(f64::NEG_INFINITY);
                    }
                    total += bs.effects.iter().map(|z| log_normal(*z, 0.0, 1.0)).sum::<f64>();
                    total += statfns::log_half_cauchy(bs.scale, self.spec.scale_prior_scale)?;
                    if !self.spec.fix_hyper_means {
                        total += log_normal(bs.hyper_mean, 0.0, self.spec.hyper_mean_sd);
                    }
                }
                PriorKind::IndependentCauchy { scale } => {
                    total += bs.effects.iter().map(|x| log_cauchy(*x, 0.0, scale)).sum::<f64>();
                }
            }
        }
        Ok(total)
    }

    pub fn log_posterior(&self, state: &ParameterState) -> Result<LogProb> {
        let prior = self.log_prior(state)?;
        if prior == f64::NEG_INFINITY {
            return Ok(prior);
        }
        Ok(self.log_likelihood(state)? + prior)
    }

    /// Unpacks a flat sampler vector (log scales) into a state.
    pub fn state_from_flat(&self, x: &[f64]) -> ParameterState {
        self.state_from_vector(x, true)
    }

    /// Unpacks a recorded draw (scales on their natural scale).
    pub fn state_from_draw(&self, draw: &[f64]) -> ParameterState {
        self.state_from_vector(draw, false)
    }

    fn state_from_vector(&self, x: &[f64], log_scale: bool) -> ParameterState {
        let blocks = self
            .layout
            .iter()
            .map(|lay| BlockState {
                hyper_mean: lay.hyper_mean.map_or(0.0, |i| x[i]),
                scale: lay.log_scale.map_or(1.0, |i| if log_scale { x[i].exp() } else { x[i] }),
                effects: x[lay.effects_start..lay.effects_start + lay.n_levels].to_vec(),
            })
            .collect();
        ParameterState { blocks }
    }

    pub fn flat_from_state(&self, state: &ParameterState) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        for (lay, bs) in self.layout.iter().zip(&state.blocks) {
            if let Some(i) = lay.hyper_mean {
                x[i] = bs.hyper_mean;
            }
            if let Some(i) = lay.log_scale {
                x[i] = bs.scale.ln();
            }
            x[lay.effects_start..lay.effects_start + lay.n_levels].copy_from_slice(&bs.effects);
        }
        x
    }

    /// Converts a flat sampler vector into the recorded (natural-scale) draw.
    pub fn draw_from_flat(&self, x: &[f64]) -> Vec<f64> {
        let mut draw = x.to_vec();
        for lay in &self.layout {
            if let Some(i) = lay.log_scale {
                draw[i] = x[i].exp();
            }
        }
        draw
    }

    /// Effect of level `l` in block `b` read straight from a flat vector.
    #[inline]
    pub(crate) fn flat_level_effect(&self, x: &[f64], b: usize, l: usize) -> f64 {
        let lay = &self.layout[b];
        let z = x[lay.effects_start + l];
        match lay.log_scale {
            Some(s) => lay.hyper_mean.map_or(0.0, |m| x[m]) + x[s].exp() * z,
            None => z,
        }
    }

    #[inline]
    pub(crate) fn flat_linear_predictor(&self, x: &[f64], j: usize) -> f64 {
        self.study_levels[j]
            .iter()
            .enumerate()
            .map(|(b, &l)| self.flat_level_effect(x, b, l))
            .sum::<f64>()
            .clamp(-MAX_LINEAR_PREDICTOR, MAX_LINEAR_PREDICTOR)
    }

    /// Log target in flat coordinates: posterior plus the log-scale Jacobian.
    pub fn flat_log_density(&self, x: &[f64]) -> f64 {
        let lik: f64 =
            self.prepared.iter().enumerate().map(|(j, p)| p.log_prob_at_logit(self.flat_linear_predictor(x, j))).sum();
        lik + (0..self.blocks.len()).map(|b| self.flat_block_prior(x, b)).sum::<f64>()
    }

    /// Prior terms of block `b` in flat coordinates, Jacobian included.
    pub(crate) fn flat_block_prior(&self, x: &[f64], b: usize) -> f64 {
        let lay = &self.layout[b];
        let effects = &x[lay.effects_start..lay.effects_start + lay.n_levels];
        match self.spec.prior {
            PriorKind::Hierarchical => {
                let mut total: f64 = effects.iter().map(|z| -0.5 * z * z).sum();
                if let Some(s) = lay.log_scale {
                    total += flat_log_scale_prior(x[s], self.spec.scale_prior_scale);
                }
                if let Some(m) = lay.hyper_mean {
                    total += log_normal(x[m], 0.0, self.spec.hyper_mean_sd);
                }
                total
            }
            PriorKind::IndependentCauchy { scale } => effects.iter().map(|v| log_cauchy(*v, 0.0, scale)).sum(),
        }
    }

    /// Log target as a function of coordinate `i` alone (other terms dropped).
    pub fn coordinate_log_density(&self, x: &[f64], i: usize) -> f64 {
        match self.coordinates[i] {
            Coordinate::HyperMean { .. } => {
                log_normal(x[i], 0.0, self.spec.hyper_mean_sd) + self.all_studies_log_lik(x)
            }
            Coordinate::LogScale { .. } => {
                flat_log_scale_prior(x[i], self.spec.scale_prior_scale) + self.all_studies_log_lik(x)
            }
            Coordinate::Effect { block, level } => {
                let prior = match self.spec.prior {
                    PriorKind::Hierarchical => -0.5 * x[i] * x[i],
                    PriorKind::IndependentCauchy { scale } => log_cauchy(x[i], 0.0, scale),
                };
                prior
                    + self.blocks[block].members[level]
                        .iter()
                        .map(|&j| self.prepared[j].log_prob_at_logit(self.flat_linear_predictor(x, j)))
                        .sum::<f64>()
            }
        }
    }

    fn all_studies_log_lik(&self, x: &[f64]) -> f64 {
        self.prepared.iter().enumerate().map(|(j, p)| p.log_prob_at_logit(self.flat_linear_predictor(x, j))).sum()
    }

    /// Sample-size weighted mean incidence across studies for a flat vector.
    pub fn weighted_mean_incidence_flat(&self, x: &[f64]) -> f64 {
        let total_n: f64 = self.records.iter().map(|r| r.n as f64).sum();
        self.records
            .iter()
            .enumerate()
            .map(|(j, r)| r.n as f64 * statfns::inv_logit(self.flat_linear_predictor(x, j)))
            .sum::<f64>()
            / total_n
    }
}

/// Half-Cauchy(A) density of `σ = exp(s)` times the Jacobian `σ`, on log scale.
fn flat_log_scale_prior(log_sigma: f64, a: f64) -> f64 {
    let sigma = log_sigma.exp();
    if sigma == 0.0 || !sigma.is_finite() {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + log_cauchy(sigma, 0.0, a) + log_sigma
}
