//! Likelihood identities, sampler correctness against closed forms and
//! quadrature, and reproducibility.

mod checks;

use censored_meta::model::{study_logprob, CensorStatus, CensoredBinomialModel, ModelSpec, StudyRecord};
use censored_meta::rng::{stream, Purpose};
use censored_meta::sampler::engine::{self, EngineConfig, Target};
use censored_meta::sampler::{self, effective_sample_size, SamplerConfig};
use censored_meta::statfns::{mean, variance};
use proptest::prelude::*;

proptest! {
    #[test]
    fn left_and_right_tails_partition(n in 1u64..400, frac in 0.0f64..1.0, theta in 1e-4f64..0.9999) {
        let c = ((n - 1) as f64 * frac) as u64;
        let left = study_logprob(&StudyRecord::new("s", n, CensorStatus::LeftCensored { c }), theta).unwrap();
        let right = study_logprob(&StudyRecord::new("s", n, CensorStatus::RightCensored { c }), theta).unwrap();
        prop_assert!((left.exp() + right.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_splits_into_tails(n in 2u64..300, u in 0.0f64..1.0, v in 0.0f64..1.0, theta in 1e-3f64..0.999) {
        let a = (u * (n - 1) as f64) as u64;
        let b = a + 1 + (v * (n - a - 1) as f64) as u64;
        let p = |o| study_logprob(&StudyRecord::new("s", n, o), theta).unwrap().exp();
        let total = p(CensorStatus::LeftCensored { c: a }) + p(CensorStatus::IntervalCensored { a, b })
            + if b < n { p(CensorStatus::RightCensored { c: b }) } else { 0.0 };
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn tails_partition_on_a_grid() {
    checks::tails_partition().unwrap();
}

#[test]
fn augmentation_route_matches_direct_sum() {
    checks::augmentation_route_agrees(10_000).unwrap();
}

#[test]
fn pmf_sums_to_one() {
    checks::pmf_normalizes(200).unwrap();
}

/// Correlated bivariate normal with ρ = 0.8 and unit variances.
struct Gaussian2;

impl Target for Gaussian2 {
    fn dim(&self) -> usize {
        2
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let rho: f64 = 0.8;
        -(x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (2.0 * (1.0 - rho * rho))
    }
}

#[test]
fn engine_targets_a_known_gaussian() {
    let cfg = EngineConfig { burn_in: 2_000, kept: 40_000, thin: 1, adapt_window: 50, target_accept: 0.44, initial_step: 0.5 };
    let mut rng = stream(5, Purpose::Chain, 0, 0);
    let mut draws = vec![Vec::new(); 2];
    let mut cross = Vec::new();
    let out = engine::run(&Gaussian2, vec![3.0, -3.0], &cfg, &mut rng, |x| {
        draws[0].push(x[0]);
        draws[1].push(x[1]);
        cross.push(x[0] * x[1]);
    });
    for d in &draws {
        let ess = effective_sample_size(std::slice::from_ref(d));
        let se = (variance(d) / ess).sqrt();
        assert!(mean(d).abs() < 4.0 * se, "mean {} se {se}", mean(d));
        assert!((variance(d) - 1.0).abs() < 0.15, "variance {}", variance(d));
    }
    assert!((mean(&cross) - 0.8).abs() < 0.15);
    for rate in out.acceptance {
        assert!((rate - 0.44).abs() < 0.1, "acceptance {rate}");
    }
}

#[test]
fn adaptation_stops_after_burn_in() {
    let cfg = EngineConfig { burn_in: 500, kept: 1_000, thin: 2, adapt_window: 50, target_accept: 0.44, initial_step: 5.0 };
    let mut rng = stream(6, Purpose::Chain, 0, 0);
    let mut kept = 0;
    let out = engine::run(&Gaussian2, vec![0.0, 0.0], &cfg, &mut rng, |_| kept += 1);
    assert_eq!(kept, 1_000);
    assert_eq!(out.step_trace.len(), (500 + 2_000) / 50);
    let frozen = &out.step_trace[9];
    assert!(out.step_trace[10..].iter().all(|s| s == frozen));
    assert_ne!(&out.step_trace[0], frozen);
}

fn uninformative_model() -> CensoredBinomialModel {
    let records = (0..4)
        .map(|j| StudyRecord::new(format!("s{j}"), 50, CensorStatus::LeftCensored { c: 50 }).with_level("g", format!("l{}", j % 2)))
        .collect();
    CensoredBinomialModel::new(records, ModelSpec::hierarchical(["g"])).unwrap()
}

#[test]
fn uninformative_data_return_the_scale_prior() {
    let model = uninformative_model();
    assert!(model.likelihood_is_constant());
    let cfg = SamplerConfig { n_chains: 4, burn_in: 2_000, kept_per_chain: 5_000, thin: 2, ..SamplerConfig::desk(3) };
    let fit = sampler::run(&model, &cfg).unwrap();
    let idx = fit.chains[0].param_index("sigma.g").unwrap();
    let per_chain: Vec<Vec<f64>> = fit.chains.iter().map(|c| c.column(idx)).collect();
    let mut sigma: Vec<f64> = per_chain.concat();
    sigma.sort_by(f64::total_cmp);
    // Kolmogorov distance to the half-Cauchy(25) CDF (2/π) atan(s/25).
    let m = sigma.len() as f64;
    let d = sigma
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let f = 2.0 / std::f64::consts::PI * (s / 25.0).atan();
            (f - i as f64 / m).abs().max(((i + 1) as f64 / m - f).abs())
        })
        .fold(0.0, f64::max);
    let log_sigma: Vec<Vec<f64>> = per_chain.iter().map(|c| c.iter().map(|s| s.ln()).collect()).collect();
    let ess = effective_sample_size(&log_sigma);
    assert!(d < 1.63 / ess.sqrt(), "KS distance {d} with ESS {ess}");
}

#[test]
fn posterior_means_match_symmetry_and_quadrature() {
    checks::posterior_mean_recovery().unwrap();
}

#[test]
fn irls_matches_brute_force_maximization() {
    checks::irls_matches_brute_force().unwrap();
}

#[test]
fn dic_matches_independent_recomputation() {
    checks::dic_recomputes().unwrap();
}

#[test]
fn fixed_seeds_reproduce_bit_for_bit() {
    checks::bitwise_determinism().unwrap();
}
