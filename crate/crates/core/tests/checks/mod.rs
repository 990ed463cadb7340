//! Oracle checks shared by the property tests and the acceptance run.
//! Each returns a description of the first mismatch.

#![allow(dead_code)]

use censored_meta::estimators::{fit_binomial_glm, lrm, GroupedCounts, Method};
use censored_meta::exec::Execution;
use censored_meta::model::{censored_term_logprob, study_logprob, CensorStatus, CensoredBinomialModel, ModelSpec, StudyRecord};
use censored_meta::rng::{stream, Purpose};
use censored_meta::sampler::{self, compute_dic, SamplerConfig};
use censored_meta::simulation::{generate_replicate, run_scenario, ScenarioConfig};
use censored_meta::statfns::{inv_logit, log_binom_pmf, log_cauchy};
use nalgebra::DMatrix;
use rand::Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn logprob(record: &StudyRecord, theta: f64) -> Result<f64, String> {
    study_logprob(record, theta).map_err(|e| e.to_string())
}

/// P(Y ≤ c) + P(Y > c) = 1 over a grid of sizes, cutoffs and rates.
pub fn tails_partition() -> Check {
    for n in 1..=300u64 {
        for c in [0, 1, n / 3, n / 2, n - 1].into_iter().filter(|&c| c < n) {
            for theta in [1e-4, 0.004, 0.025, 0.3, 0.9, 0.9999] {
                let left = logprob(&StudyRecord::new("s", n, CensorStatus::LeftCensored { c }), theta)?;
                let right = logprob(&StudyRecord::new("s", n, CensorStatus::RightCensored { c }), theta)?;
                let total = left.exp() + right.exp();
                ensure!((total - 1.0).abs() < 1e-12, "n={n} c={c} θ={theta}: tails sum to {total}");
            }
        }
    }
    Ok(())
}

pub fn random_censored(rng: &mut impl Rng) -> StudyRecord {
    let n: u64 = rng.random_range(1..=500);
    let outcome = match rng.random_range(0..3) {
        0 => CensorStatus::LeftCensored { c: rng.random_range(0..n) },
        1 => CensorStatus::RightCensored { c: rng.random_range(0..n) },
        _ => {
            let a = rng.random_range(0..n);
            CensorStatus::IntervalCensored { a, b: rng.random_range(a + 1..=n) }
        }
    };
    StudyRecord::new("s", n, outcome)
}

/// The incomplete-beta route against the direct pmf sum: absolute on the
/// probability scale, relative on the log scale.
pub fn augmentation_route_agrees(records: usize) -> Check {
    let mut rng = stream(17, Purpose::Synthetic, 0, 0);
    for _ in 0..records {
        let record = random_censored(&mut rng);
        let theta = inv_logit(rng.random_range(-7.0..2.0));
        let direct = logprob(&record, theta)?;
        let augmented = censored_term_logprob(&record, theta).map_err(|e| e.to_string())?;
        ensure!(
            (direct.exp() - augmented.exp()).abs() <= 1e-12 && (direct - augmented).abs() <= 1e-9 * direct.abs().max(1.0),
            "{record:?} θ={theta}: {direct} vs {augmented}"
        );
    }
    Ok(())
}

pub fn pmf_normalizes(max_n: u64) -> Check {
    for n in 0..=max_n {
        for theta in [1e-6, 0.003, 0.025, 0.2, 0.5, 0.77, 0.999] {
            let mut total = 0.0;
            for k in 0..=n {
                total += log_binom_pmf(k, n, theta).map_err(|e| e.to_string())?.exp();
            }
            ensure!((total - 1.0).abs() < 1e-12, "n={n} θ={theta}: pmf sums to {total}");
        }
    }
    Ok(())
}

/// Posterior mean of θ under a Cauchy(0, scale) prior on logit θ, by
/// trapezoidal quadrature over the logit.
pub fn quadrature_mean(records: &[StudyRecord], scale: f64) -> f64 {
    let (lo, hi, m) = (-25.0, 25.0, 200_000);
    let h = (hi - lo) / m as f64;
    let log_w: Vec<(f64, f64)> = (0..=m)
        .map(|i| {
            let eta = lo + i as f64 * h;
            let theta = inv_logit(eta);
            let lik: f64 = records.iter().map(|r| study_logprob(r, theta).unwrap()).sum();
            (theta, lik + log_cauchy(eta, 0.0, scale))
        })
        .collect();
    let peak = log_w.iter().map(|w| w.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (theta, lw)) in log_w.iter().enumerate() {
        let w = (lw - peak).exp() * if i == 0 || i == m { 0.5 } else { 1.0 };
        num += w * theta;
        den += w;
    }
    num / den
}

fn posterior_mean_within_mc_error(records: Vec<StudyRecord>, expected: f64, seed: u64) -> Check {
    let records = records.into_iter().map(|r| r.with_level("drug", "a")).collect();
    let model = CensoredBinomialModel::new(records, ModelSpec::independent_cauchy("drug", 10.0)).map_err(|e| e.to_string())?;
    let cfg = SamplerConfig { n_chains: 4, burn_in: 2_000, kept_per_chain: 10_000, thin: 1, ..SamplerConfig::desk(seed) };
    let fit = sampler::run(&model, &cfg).map_err(|e| e.to_string())?;
    let theta = fit.summary.get("theta.drug[a]").ok_or("missing theta.drug[a]")?;
    let mc_se = theta.sd / theta.ess.sqrt();
    ensure!(
        (theta.mean - expected).abs() < 3.0 * mc_se,
        "posterior mean {} vs {expected} (MC-SE {mc_se})",
        theta.mean
    );
    Ok(())
}

/// y = 5 of 10 is centred at 1/2 by symmetry; a censored set is checked
/// against quadrature.
pub fn posterior_mean_recovery() -> Check {
    posterior_mean_within_mc_error(vec![StudyRecord::new("s", 10, CensorStatus::Observed { y: 5 })], 0.5, 11)?;
    let records = vec![
        StudyRecord::new("a", 60, CensorStatus::Observed { y: 2 }),
        StudyRecord::new("b", 80, CensorStatus::LeftCensored { c: 1 }),
        StudyRecord::new("c", 40, CensorStatus::IntervalCensored { a: 0, b: 3 }),
    ];
    let expected = quadrature_mean(&records, 10.0);
    ensure!(expected > 0.005 && expected < 0.05, "quadrature mean {expected} out of range");
    posterior_mean_within_mc_error(records, expected, 12)
}

pub fn three_drug_counts() -> GroupedCounts {
    GroupedCounts {
        levels: vec!["1".into(), "2".into(), "3".into()],
        counts: vec![
            vec![(2, 100), (4, 100), (1, 100), (3, 100), (0, 100)],
            vec![(5, 100), (2, 100), (3, 100), (2, 100)],
            vec![(1, 100), (0, 100), (2, 100), (1, 100), (0, 100), (1, 100)],
        ],
        n_dropped: 0,
    }
}

fn binomial_log_lik(design: &DMatrix<f64>, y: &[f64], n: &[f64], beta: &[f64]) -> f64 {
    (0..design.nrows())
        .map(|i| {
            let eta: f64 = (0..beta.len()).map(|j| design[(i, j)] * beta[j]).sum();
            y[i] * eta - n[i] * eta.exp().ln_1p()
        })
        .sum()
}

/// Cyclic golden-section coordinate ascent; the log-likelihood is concave.
pub fn golden_section_mle(design: &DMatrix<f64>, y: &[f64], n: &[f64]) -> Vec<f64> {
    let p = design.ncols();
    let mut beta = vec![0.0; p];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..300 {
        for j in 0..p {
            let f = |v: f64, beta: &mut Vec<f64>| {
                beta[j] = v;
                binomial_log_lik(design, y, n, beta)
            };
            let (mut a, mut b) = (beta[j] - 4.0, beta[j] + 4.0);
            while b - a > 1e-12 {
                let (c, d) = (b - g * (b - a), a + g * (b - a));
                if f(c, &mut beta) > f(d, &mut beta) {
                    b = d;
                } else {
                    a = c;
                }
            }
            beta[j] = (a + b) / 2.0;
        }
    }
    beta
}

pub fn irls_matches_brute_force() -> Check {
    let data = three_drug_counts();
    let rows: Vec<(usize, f64, f64)> = data
        .counts
        .iter()
        .enumerate()
        .flat_map(|(k, s)| s.iter().map(move |&(y, n)| (k, y as f64, n as f64)))
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let n: Vec<f64> = rows.iter().map(|r| r.2).collect();
    // Drug indicators, then the same with a per-study covariate so the
    // model is no longer saturated in drug.
    let drug = DMatrix::from_fn(rows.len(), 3, |i, j| if j == 0 || rows[i].0 == j { 1.0 } else { 0.0 });
    let with_covariate =
        DMatrix::from_fn(rows.len(), 4, |i, j| if j == 3 { (i % 4) as f64 - 1.5 } else { drug[(i, j)] });
    for design in [drug, with_covariate] {
        let fit = fit_binomial_glm(&design, &y, &n).map_err(|e| e.to_string())?;
        ensure!(fit.converged && !fit.separated, "IRLS did not converge cleanly");
        let brute = golden_section_mle(&design, &y, &n);
        for (a, b) in fit.coefficients.iter().zip(&brute) {
            ensure!((a - b).abs() < 1e-6, "IRLS {a} vs golden section {b}");
        }
    }
    let report = lrm(&data).map_err(|e| e.to_string())?;
    let d1 = report.incidences[0].ok_or("no LRM estimate for drug 1")?.estimate;
    ensure!((d1 - 10.0 / 500.0).abs() < 1e-10, "LRM drug 1 incidence {d1}, pooled 0.02");
    Ok(())
}

/// Deviance per draw from the pmf-sum route, then DIC with the plug-in at
/// the posterior mean linear predictor.
pub fn dic_recomputes() -> Check {
    let records: Vec<StudyRecord> = vec![
        StudyRecord::new("a", 120, CensorStatus::Observed { y: 3 }).with_level("drug", "x").with_level("site", "p"),
        StudyRecord::new("b", 90, CensorStatus::LeftCensored { c: 2 }).with_level("drug", "x").with_level("site", "q"),
        StudyRecord::new("c", 150, CensorStatus::Observed { y: 6 }).with_level("drug", "y").with_level("site", "p"),
        StudyRecord::new("d", 60, CensorStatus::RightCensored { c: 1 }).with_level("drug", "y").with_level("site", "q"),
        StudyRecord::new("e", 75, CensorStatus::IntervalCensored { a: 0, b: 2 }).with_level("drug", "z").with_level("site", "p"),
    ];
    let model = CensoredBinomialModel::new(records.clone(), ModelSpec::hierarchical(["drug", "site"])).map_err(|e| e.to_string())?;
    let cfg = SamplerConfig { burn_in: 500, kept_per_chain: 400, ..SamplerConfig::desk(8) };
    let fit = sampler::run(&model, &cfg).map_err(|e| e.to_string())?;

    let mut deviances = Vec::new();
    let mut eta_sum = vec![0.0; records.len()];
    for chain in &fit.chains {
        for i in 0..chain.n_draws() {
            let state = model.state_from_draw(chain.draw(i));
            let mut dev = 0.0;
            for (j, r) in records.iter().enumerate() {
                let eta = model.linear_predictor(&state, j);
                eta_sum[j] += eta;
                dev -= 2.0 * logprob(r, inv_logit(eta))?;
            }
            ensure!((dev - chain.deviance_draws[i]).abs() < 1e-9 * dev.abs().max(1.0), "deviance at draw {i}: {dev} vs {}", chain.deviance_draws[i]);
            deviances.push(dev);
        }
    }
    let total = deviances.len() as f64;
    let d_bar = deviances.iter().sum::<f64>() / total;
    let mut d_hat = 0.0;
    for (r, s) in records.iter().zip(&eta_sum) {
        d_hat -= 2.0 * logprob(r, inv_logit(s / total))?;
    }
    let dic = compute_dic(&fit.chains, &model);
    ensure!((dic.mean_deviance - d_bar).abs() < 1e-9, "mean deviance {} vs {d_bar}", dic.mean_deviance);
    ensure!((dic.deviance_at_mean - d_hat).abs() < 1e-9, "plug-in deviance {} vs {d_hat}", dic.deviance_at_mean);
    ensure!((dic.dic - (2.0 * d_bar - d_hat)).abs() < 1e-9, "DIC {} vs {}", dic.dic, 2.0 * d_bar - d_hat);
    ensure!((fit.summary.dic - dic.dic).abs() < 1e-9, "summary DIC {} vs {}", fit.summary.dic, dic.dic);
    ensure!(dic.pd >= 0.0, "negative pD {}", dic.pd);
    Ok(())
}

/// Same seed, same bits: data generation, chains, and whole scenarios,
/// sequentially and in parallel.
pub fn bitwise_determinism() -> Check {
    let scenario = ScenarioConfig { n_replicates: 4, bmcd_replicates: 2, ..ScenarioConfig::preset("S4", 99).unwrap() };
    ensure!(generate_replicate(&scenario, 3).unwrap() == generate_replicate(&scenario, 3).unwrap(), "replicate data differ");

    let records = generate_replicate(&scenario, 0).map_err(|e| e.to_string())?;
    let model = CensoredBinomialModel::new(records, ModelSpec::independent_cauchy("drug", 10.0)).map_err(|e| e.to_string())?;
    let cfg = SamplerConfig { burn_in: 300, kept_per_chain: 200, ..SamplerConfig::desk(4) };
    let a = sampler::run_with(&model, &cfg, Execution::Sequential).map_err(|e| e.to_string())?;
    let b = sampler::run_with(&model, &cfg, Execution::Parallel).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    for (x, y) in a.chains.iter().zip(&b.chains) {
        ensure!(bits(&x.draws) == bits(&y.draws), "chain draws differ");
        ensure!(bits(&x.deviance_draws) == bits(&y.deviance_draws), "deviance draws differ");
    }
    ensure!(a.summary == b.summary, "posterior summaries differ");

    let scenario = ScenarioConfig { bmcd_profile: cfg, ..scenario };
    let s = run_scenario(&scenario, &Method::ALL, Execution::Sequential).map_err(|e| e.to_string())?;
    let p = run_scenario(&scenario, &Method::ALL, Execution::Parallel).map_err(|e| e.to_string())?;
    ensure!(s.raw == p.raw, "scenario estimates differ");
    let bmcd = s.raw.iter().filter(|r| r.method == Method::Bmcd).count();
    ensure!(bmcd == 2 * 6, "expected 12 BMCD estimates, got {bmcd}");
    Ok(())
}
