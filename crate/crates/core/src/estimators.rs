//! Classical comparators (pooled, normal-approximation, logistic
//! regression, robust variance) and the Bayesian report built from a fit.
//!
//! The comparators only see observed counts; censored studies are dropped
//! and counted in `n_dropped`.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{CensorStatus, CensoredBinomialModel, StudyRecord};
use crate::sampler::{level_logit, FitOutput};
use crate::statfns::{clopper_pearson_real, inv_logit, quantile_sorted};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;
pub const LRM_MAX_ITER: usize = 50;
pub const LRM_SCORE_TOL: f64 = 1e-8;
pub const LRM_COEF_CAP: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    Bmcd,
    Pem,
    Nam,
    Lrm,
    Rve,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Bmcd, Method::Pem, Method::Nam, Method::Lrm, Method::Rve];
    pub const COMPARATORS: [Method; 4] = [Method::Pem, Method::Nam, Method::Lrm, Method::Rve];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bmcd => "BMCD",
            Method::Pem => "PEM",
            Method::Nam => "NAM",
            Method::Lrm => "LRM",
            Method::Rve => "RVE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// A point estimate with its 95% interval. `se` is on the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub se: f64,
}

impl Estimate {
    pub fn covers(&self, truth: f64) -> bool {
        self.lo <= truth && truth <= self.hi
    }

    fn from_logit(center: f64, var: f64) -> Self {
        let sd = var.sqrt();
        let p = inv_logit(center);
        Estimate {
            estimate: p,
            lo: inv_logit(center - Z95 * sd),
            hi: inv_logit(center + Z95 * sd),
            se: p * (1.0 - p) * sd,
        }
    }

    fn from_log(center: f64, var: f64) -> Self {
        let sd = var.sqrt();
        let r = center.exp();
        Estimate { estimate: r, lo: (center - Z95 * sd).exp(), hi: (center + Z95 * sd).exp(), se: r * sd }
    }
}

/// Odds ratio of level `a` against level `b` (indices into `levels`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OddsRatio {
    pub a: usize,
    pub b: usize,
    pub estimate: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub method: Method,
    pub levels: Vec<String>,
    /// `None` marks a level with no usable study.
    pub incidences: Vec<Option<Estimate>>,
    /// Pairs ordered (2 vs 1), (3 vs 1), (3 vs 2), ...
    pub odds_ratios: Vec<OddsRatio>,
    /// All usable studies pooled as a single group.
    pub overall: Option<Estimate>,
    pub n_used: usize,
    pub n_dropped: usize,
    pub warnings: Vec<String>,
    pub flags: Vec<String>,
}

impl EstimateReport {
    pub fn incidence(&self, level: &str) -> Option<&Estimate> {
        let i = self.levels.iter().position(|l| l == level)?;
        self.incidences[i].as_ref()
    }

    pub fn odds_ratio(&self, a: usize, b: usize) -> Option<&Estimate> {
        self.odds_ratios.iter().find(|o| o.a == a && o.b == b)?.estimate.as_ref()
    }
}

/// All pairs `(a, b)` with `a > b`, in the order used by every report.
pub fn level_pairs(k: usize) -> Vec<(usize, usize)> {
    (1..k).flat_map(|a| (0..a).map(move |b| (a, b))).collect()
}

/// Observed `(y, n)` counts grouped by the levels of one factor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedCounts {
    pub levels: Vec<String>,
    pub counts: Vec<Vec<(u64, u64)>>,
    pub n_dropped: usize,
}

impl GroupedCounts {
    /// Groups by `factor`, levels in order of first appearance. Censored
    /// studies are dropped but their levels still appear.
    pub fn from_records(records: &[StudyRecord], factor: &str) -> Result<Self> {
        let mut levels: Vec<String> = Vec::new();
        let mut counts: Vec<Vec<(u64, u64)>> = Vec::new();
        let mut n_dropped = 0;
        for r in records {
            let level = r
                .level(factor)
                .ok_or_else(|| Error::InvalidRecord { study_id: r.study_id.clone(), reason: format!("no level for factor `{factor}`") })?;
            let idx = match levels.iter().position(|l| l == level) {
                Some(i) => i,
                None => {
                    levels.push(level.to_string());
                    counts.push(Vec::new());
                    levels.len() - 1
                }
            };
            match r.outcome {
                CensorStatus::Observed { y } => counts[idx].push((y, r.n)),
                _ => n_dropped += 1,
            }
        }
        Ok(GroupedCounts { levels, counts, n_dropped })
    }

    /// Same data with every level merged into one.
    pub fn pooled(&self) -> GroupedCounts {
        GroupedCounts { levels: vec!["all".into()], counts: vec![self.counts.concat()], n_dropped: self.n_dropped }
    }

    pub fn n_used(&self) -> usize {
        self.counts.iter().map(Vec::len).sum()
    }
}

struct Partial {
    incidences: Vec<Option<Estimate>>,
    odds_ratios: Vec<OddsRatio>,
    warnings: Vec<String>,
    flags: Vec<String>,
}

fn finish(method: Method, data: &GroupedCounts, partial: Partial, overall: Option<Estimate>) -> EstimateReport {
    let mut warnings = partial.warnings;
    for (level, inc) in data.levels.iter().zip(&partial.incidences) {
        if inc.is_none() {
            warnings.push(format!("level `{level}` has no observed study"));
        }
    }
    for w in &warnings {
        warn!("{method}: {w}");
    }
    EstimateReport {
        method,
        levels: data.levels.clone(),
        incidences: partial.incidences,
        odds_ratios: partial.odds_ratios,
        overall,
        n_used: data.n_used(),
        n_dropped: data.n_dropped,
        warnings,
        flags: partial.flags,
    }
}

/// Runs a comparator on grouped counts. Fails only when no level has a
/// usable study.
pub fn run_comparator(method: Method, data: &GroupedCounts) -> Result<EstimateReport> {
    if data.n_used() == 0 {
        return Err(Error::Estimator { method: method.name().into(), reason: "no observed studies".into() });
    }
    let compute = |d: &GroupedCounts| -> Result<Partial> {
        match method {
            Method::Pem => Ok(pem_partial(d)),
            Method::Nam => Ok(weighted_logit_partial(d, false)),
            Method::Rve => Ok(weighted_logit_partial(d, true)),
            Method::Lrm => lrm_partial(d),
            Method::Bmcd => Err(Error::InvalidArgument("BMCD is not a comparator; use `bmcd_report`".into())),
        }
    };
    let partial = compute(data)?;
    let overall = compute(&data.pooled())?.incidences[0];
    Ok(finish(method, data, partial, overall))
}

pub fn pem(data: &GroupedCounts) -> Result<EstimateReport> {
    run_comparator(Method::Pem, data)
}

pub fn nam(data: &GroupedCounts) -> Result<EstimateReport> {
    run_comparator(Method::Nam, data)
}

pub fn lrm(data: &GroupedCounts) -> Result<EstimateReport> {
    run_comparator(Method::Lrm, data)
}

pub fn rve(data: &GroupedCounts) -> Result<EstimateReport> {
    run_comparator(Method::Rve, data)
}

/// Pooled events and trials with 0.5 added to the events (and 1 to the
/// trials) of each zero-count study.
fn pem_pool(studies: &[(u64, u64)]) -> (f64, f64) {
    studies.iter().fold((0.0, 0.0), |(e, t), &(y, n)| {
        if y == 0 {
            (e + 0.5, t + n as f64 + 1.0)
        } else {
            (e + y as f64, t + n as f64)
        }
    })
}

fn pem_partial(data: &GroupedCounts) -> Partial {
    let pools: Vec<Option<(f64, f64)>> =
        data.counts.iter().map(|s| if s.is_empty() { None } else { Some(pem_pool(s)) }).collect();
    let mut warnings = Vec::new();
    let incidences = pools
        .iter()
        .map(|pool| {
            let (e, t) = (*pool)?;
            let p = e / t;
            let (lo, hi) = clopper_pearson_real(e, t, 0.95).ok()?;
            Some(Estimate { estimate: p, lo, hi, se: (p * (1.0 - p) / t).sqrt() })
        })
        .collect();
    let odds_ratios = level_pairs(data.levels.len())
        .into_iter()
        .map(|(a, b)| {
            let estimate = match (pools[a], pools[b]) {
                (Some((ea, ta)), Some((eb, tb))) => {
                    let cells = [ea, ta - ea, eb, tb - eb];
                    if cells.iter().all(|c| *c > 0.0) {
                        let log_or = (cells[0] * cells[3] / (cells[1] * cells[2])).ln();
                        let var: f64 = cells.iter().map(|c| 1.0 / c).sum();
                        Some(Estimate::from_log(log_or, var))
                    } else {
                        warnings.push(format!("empty 2x2 cell for levels {} vs {}", data.levels[a], data.levels[b]));
                        None
                    }
                }
                _ => None,
            };
            OddsRatio { a, b, estimate }
        })
        .collect();
    Partial { incidences, odds_ratios, warnings, flags: Vec::new() }
}

/// Inverse-variance weighted mean of per-study logits, with either the
/// model-based or the sandwich variance.
fn weighted_logit(studies: &[(u64, u64)], robust: bool) -> Option<(f64, f64, bool)> {
    if studies.is_empty() {
        return None;
    }
    let terms: Vec<(f64, f64)> = studies
        .iter()
        .map(|&(y, n)| {
            let (y, n) = (y as f64, n as f64);
            let l = ((y + 0.5) / (n - y + 0.5)).ln();
            let v = 1.0 / (y + 0.5) + 1.0 / (n - y + 0.5);
            (l, 1.0 / v)
        })
        .collect();
    let w_sum: f64 = terms.iter().map(|t| t.1).sum();
    let center = terms.iter().map(|(l, w)| l * w).sum::<f64>() / w_sum;
    if robust && studies.len() >= 2 {
        let var = terms.iter().map(|(l, w)| w * w * (l - center).powi(2)).sum::<f64>() / (w_sum * w_sum);
        Some((center, var, false))
    } else {
        Some((center, 1.0 / w_sum, robust))
    }
}

fn weighted_logit_partial(data: &GroupedCounts, robust: bool) -> Partial {
    let fits: Vec<Option<(f64, f64, bool)>> = data.counts.iter().map(|s| weighted_logit(s, robust)).collect();
    let mut warnings = Vec::new();
    let mut flags = Vec::new();
    for (level, fit) in data.levels.iter().zip(&fits) {
        match fit {
            Some((_, _, true)) => warnings.push(format!("level `{level}` has one study; using the model-based variance")),
            Some((_, var, _)) if *var == 0.0 => flags.push(format!("degenerate_interval:{level}")),
            _ => {}
        }
    }
    let incidences = fits.iter().map(|f| f.map(|(c, v, _)| Estimate::from_logit(c, v))).collect();
    let odds_ratios = level_pairs(data.levels.len())
        .into_iter()
        .map(|(a, b)| {
            let estimate = match (fits[a], fits[b]) {
                (Some((ca, va, _)), Some((cb, vb, _))) => Some(Estimate::from_log(ca - cb, va + vb)),
                _ => None,
            };
            OddsRatio { a, b, estimate }
        })
        .collect();
    Partial { incidences, odds_ratios, warnings, flags }
}

/// Aggregated binomial logistic regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// A coefficient hit the `LRM_COEF_CAP` bound.
    pub separated: bool,
}

/// Maximizes `Σ y η − n log(1 + e^η)` with `η = X β` by iteratively
/// reweighted least squares.
pub fn fit_binomial_glm(design: &DMatrix<f64>, y: &[f64], n: &[f64]) -> Result<GlmFit> {
    let p = design.ncols();
    let fail = |reason: &str| Error::Estimator { method: "LRM".into(), reason: reason.into() };
    let mut beta = DVector::<f64>::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut info = DMatrix::<f64>::zeros(p, p);
    for iter in 0..=LRM_MAX_ITER {
        let eta = design * &beta;
        let mut score = DVector::<f64>::zeros(p);
        info.fill(0.0);
        for i in 0..design.nrows() {
            let mu = inv_logit(eta[i]);
            let row = design.row(i);
            score += row.transpose() * (y[i] - n[i] * mu);
            let w = n[i] * mu * (1.0 - mu);
            info += row.transpose() * row * w;
        }
        if score.amax() < LRM_SCORE_TOL {
            converged = true;
            break;
        }
        if iter == LRM_MAX_ITER {
            break;
        }
        iterations = iter + 1;
        let step = info.clone().cholesky().ok_or_else(|| fail("information matrix is singular"))?.solve(&score);
        beta += step;
        beta.apply(|b| *b = b.clamp(-LRM_COEF_CAP, LRM_COEF_CAP));
    }
    let separated = beta.iter().any(|b| b.abs() >= LRM_COEF_CAP);
    // Saturated fitted probabilities can make the information singular;
    // the floor keeps capped fits reportable.
    let covariance = match info.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None if separated => (info + DMatrix::identity(p, p) * 1e-12).try_inverse().ok_or_else(|| fail("information matrix is singular"))?,
        None => return Err(fail("information matrix is singular")),
    };
    Ok(GlmFit { coefficients: beta.iter().copied().collect(), covariance, iterations, converged, separated })
}

fn lrm_partial(data: &GroupedCounts) -> Result<Partial> {
    let present: Vec<usize> = (0..data.levels.len()).filter(|&k| !data.counts[k].is_empty()).collect();
    let p = present.len();
    let rows: Vec<(usize, f64, f64)> = present
        .iter()
        .enumerate()
        .flat_map(|(col, &k)| data.counts[k].iter().map(move |&(y, n)| (col, y as f64, n as f64)))
        .collect();
    // Intercept plus indicators for every present level but the first.
    let design = DMatrix::from_fn(rows.len(), p, |i, j| if j == 0 || rows[i].0 == j { 1.0 } else { 0.0 });
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let fit = fit_binomial_glm(&design, &y, &n)?;

    let mut warnings = Vec::new();
    let mut flags = Vec::new();
    if fit.separated {
        warnings.push(format!("separation: coefficients capped at {LRM_COEF_CAP}"));
        flags.push("separation".to_string());
    } else if !fit.converged {
        warnings.push(format!("IRLS did not converge in {LRM_MAX_ITER} iterations"));
        flags.push("not_converged".to_string());
    }

    // Contrast vector mapping coefficients to a level's linear predictor.
    let contrast = |col: usize| -> DVector<f64> {
        let mut c = DVector::zeros(p);
        c[0] = 1.0;
        if col > 0 {
            c[col] = 1.0;
        }
        c
    };
    let beta = DVector::from_vec(fit.coefficients.clone());
    let quad = |c: &DVector<f64>| (c.transpose() * &fit.covariance * c)[(0, 0)].max(0.0);
    let mut col_of = vec![None; data.levels.len()];
    for (col, &k) in present.iter().enumerate() {
        col_of[k] = Some(col);
    }
    let incidences = col_of
        .iter()
        .map(|col| {
            let c = contrast((*col)?);
            Some(Estimate::from_logit(c.dot(&beta), quad(&c)))
        })
        .collect();
    let odds_ratios = level_pairs(data.levels.len())
        .into_iter()
        .map(|(a, b)| {
            let estimate = match (col_of[a], col_of[b]) {
                (Some(ca), Some(cb)) => {
                    let c = contrast(ca) - contrast(cb);
                    Some(Estimate::from_log(c.dot(&beta), quad(&c)))
                }
                _ => None,
            };
            OddsRatio { a, b, estimate }
        })
        .collect();
    Ok(Partial { incidences, odds_ratios, warnings, flags })
}

/// Report of a fitted model for the levels of `factor`.
///
/// Incidences use the posterior mean, odds ratios the posterior median
/// (the odds ratio's posterior mean is dominated by its right tail when
/// counts are small); intervals are central 95% credible intervals and
/// `se` is the posterior standard deviation.
pub fn bmcd_report(model: &CensoredBinomialModel, fit: &FitOutput, factor: &str) -> Result<EstimateReport> {
    let b = model
        .block_index(factor)
        .ok_or_else(|| Error::InvalidArgument(format!("model has no factor `{factor}`")))?;
    let levels = model.blocks()[b].levels.clone();
    let k = levels.len();
    let mut logits: Vec<Vec<f64>> = vec![Vec::with_capacity(fit.summary.total_draws); k];
    for chain in &fit.chains {
        for i in 0..chain.n_draws() {
            let draw = chain.draw(i);
            for (l, col) in logits.iter_mut().enumerate() {
                col.push(level_logit(model, draw, b, l));
            }
        }
    }
    let incidences = logits
        .iter()
        .map(|col| Some(posterior_estimate(col.iter().map(|&e| inv_logit(e)).collect(), false)))
        .collect();
    let odds_ratios = level_pairs(k)
        .into_iter()
        .map(|(a, bb)| {
            let ors = logits[a].iter().zip(&logits[bb]).map(|(x, y)| (x - y).exp()).collect();
            OddsRatio { a, b: bb, estimate: Some(posterior_estimate(ors, true)) }
        })
        .collect();
    let overall = fit.summary.get("incidence.overall").map(|s| Estimate { estimate: s.mean, lo: s.q025, hi: s.q975, se: s.sd });
    let n_used = model.records().len();
    let flags = fit.summary.flagged.iter().map(|n| format!("rhat:{n}")).collect();
    Ok(EstimateReport {
        method: Method::Bmcd,
        levels,
        incidences,
        odds_ratios,
        overall,
        n_used,
        n_dropped: 0,
        warnings: Vec::new(),
        flags,
    })
}

fn posterior_estimate(mut draws: Vec<f64>, use_median: bool) -> Estimate {
    let m = crate::statfns::mean(&draws);
    let se = crate::statfns::variance(&draws).sqrt();
    draws.sort_by(f64::total_cmp);
    let estimate = if use_median { quantile_sorted(&draws, 0.5) } else { m };
    Estimate { estimate, lo: quantile_sorted(&draws, 0.025), hi: quantile_sorted(&draws, 0.975), se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statfns::logit;
    use approx::assert_abs_diff_eq;

    fn grouped(levels: &[&[(u64, u64)]]) -> GroupedCounts {
        GroupedCounts {
            levels: (1..=levels.len()).map(|i| i.to_string()).collect(),
            counts: levels.iter().map(|s| s.to_vec()).collect(),
            n_dropped: 0,
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().to_lowercase().parse::<Method>().unwrap(), m);
        }
        assert!("glmm".parse::<Method>().is_err());
    }

    #[test]
    fn pairs_order() {
        assert_eq!(level_pairs(3), vec![(1, 0), (2, 0), (2, 1)]);
    }

    #[test]
    fn pem_pooling_and_or() {
        let r = pem(&grouped(&[&[(2, 100), (3, 100)], &[(5, 200)]])).unwrap();
        assert_abs_diff_eq!(r.incidences[0].unwrap().estimate, 0.025, epsilon = 1e-15);
        let or = r.odds_ratio(1, 0).unwrap();
        assert_abs_diff_eq!(or.estimate, 1.0, epsilon = 1e-15);
        assert!(or.covers(1.0));
    }

    #[test]
    fn pem_log_or_se_hand_arithmetic() {
        let r = pem(&grouped(&[&[(5, 200)], &[(5, 200)]])).unwrap();
        let or = r.odds_ratio(1, 0).unwrap();
        let se = (2.0 / 5.0 + 2.0 / 195.0_f64).sqrt();
        assert_abs_diff_eq!(or.hi.ln(), Z95 * se, epsilon = 1e-12);
        assert_abs_diff_eq!(or.lo.ln(), -Z95 * se, epsilon = 1e-12);
    }

    #[test]
    fn pem_zero_count_correction() {
        let r = pem(&grouped(&[&[(0, 100), (2, 100)]])).unwrap();
        assert_abs_diff_eq!(r.incidences[0].unwrap().estimate, 2.5 / 201.0, epsilon = 1e-15);
    }

    #[test]
    fn nam_single_study_collapse() {
        let r = nam(&grouped(&[&[(2, 100)]])).unwrap();
        assert_abs_diff_eq!(r.incidences[0].unwrap().estimate, 2.5 / 101.0, epsilon = 1e-15);
    }

    #[test]
    fn nam_duplicate_study_halves_variance() {
        let one = weighted_logit(&[(2, 100)], false).unwrap();
        let two = weighted_logit(&[(2, 100), (2, 100)], false).unwrap();
        assert_abs_diff_eq!(one.0, two.0, epsilon = 1e-15);
        assert_abs_diff_eq!(one.1 / 2.0, two.1, epsilon = 1e-15);
    }

    #[test]
    fn rve_shares_nam_point_estimates() {
        let data = grouped(&[&[(1, 100), (4, 100), (0, 80)], &[(2, 120), (7, 90)]]);
        let (a, b) = (nam(&data).unwrap(), rve(&data).unwrap());
        for (x, y) in a.incidences.iter().zip(&b.incidences) {
            assert_eq!(x.unwrap().estimate, y.unwrap().estimate);
        }
        assert_eq!(a.odds_ratio(1, 0).unwrap().estimate, b.odds_ratio(1, 0).unwrap().estimate);
    }

    #[test]
    fn rve_homogeneous_is_degenerate() {
        let r = rve(&grouped(&[&[(3, 100), (3, 100)]])).unwrap();
        let e = r.incidences[0].unwrap();
        assert_eq!(e.lo, e.hi);
        assert!(r.flags.iter().any(|f| f.starts_with("degenerate_interval")));
    }

    #[test]
    fn rve_single_study_falls_back() {
        let data = grouped(&[&[(3, 100)]]);
        let (a, b) = (nam(&data).unwrap(), rve(&data).unwrap());
        assert_eq!(a.incidences, b.incidences);
        assert_eq!(b.warnings.len(), 1);
    }

    #[test]
    fn lrm_single_drug_is_pooled_mle() {
        let r = lrm(&grouped(&[&[(2, 100), (3, 100)]])).unwrap();
        let e = r.incidences[0].unwrap();
        assert_abs_diff_eq!(e.estimate, 0.025, epsilon = 1e-12);
        // Wald SE on the logit scale is 1/sqrt(N p (1-p)).
        let sd_logit = 1.0 / (200.0 * 0.025 * 0.975_f64).sqrt();
        assert_abs_diff_eq!(e.se, 0.025 * 0.975 * sd_logit, epsilon = 1e-10);
        assert_abs_diff_eq!(logit(e.hi).unwrap() - logit(0.025).unwrap(), Z95 * sd_logit, epsilon = 1e-10);
    }

    #[test]
    fn lrm_equal_drugs_have_null_or() {
        let r = lrm(&grouped(&[&[(5, 200)], &[(2, 80)]])).unwrap();
        let or = r.odds_ratio(1, 0).unwrap();
        assert_abs_diff_eq!(or.estimate, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(or.lo * or.hi, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lrm_separation_is_capped_and_flagged() {
        let r = lrm(&grouped(&[&[(2, 100)], &[(0, 100), (0, 50)]])).unwrap();
        assert!(r.flags.contains(&"separation".to_string()));
        let e = r.incidences[1].unwrap();
        assert!(e.estimate.is_finite() && e.estimate < 1e-5);
    }

    #[test]
    fn missing_level_is_reported_not_fatal() {
        let data = grouped(&[&[(2, 100)], &[]]);
        for m in Method::COMPARATORS {
            let r = run_comparator(m, &data).unwrap();
            assert!(r.incidences[1].is_none());
            assert!(r.odds_ratio(1, 0).is_none());
        }
        assert!(pem(&grouped(&[&[]])).is_err());
    }

    #[test]
    fn grouping_drops_censored() {
        let records = vec![
            StudyRecord::new("a", 100, CensorStatus::Observed { y: 2 }).with_level("drug", "x"),
            StudyRecord::new("b", 100, CensorStatus::LeftCensored { c: 1 }).with_level("drug", "y"),
            StudyRecord::new("c", 100, CensorStatus::Observed { y: 4 }).with_level("drug", "y"),
        ];
        let g = GroupedCounts::from_records(&records, "drug").unwrap();
        assert_eq!(g.levels, vec!["x", "y"]);
        assert_eq!(g.counts, vec![vec![(2, 100)], vec![(4, 100)]]);
        assert_eq!(g.n_dropped, 1);
        let r = pem(&g).unwrap();
        assert_eq!((r.n_used, r.n_dropped), (2, 1));
        assert!(GroupedCounts::from_records(&records, "dose").is_err());
    }

    #[test]
    fn intervals_contain_estimates() {
        let data = grouped(&[&[(0, 100), (1, 100), (4, 100)], &[(3, 100), (2, 100)], &[(0, 100), (1, 100)]]);
        for m in Method::COMPARATORS {
            let r = run_comparator(m, &data).unwrap();
            for e in r.incidences.iter().flatten().chain(r.odds_ratios.iter().filter_map(|o| o.estimate.as_ref())) {
                assert!(e.lo <= e.estimate && e.estimate <= e.hi, "{m} {e:?}");
                assert!(e.estimate > 0.0);
            }
        }
    }
}
