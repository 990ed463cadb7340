//! Log-space probability primitives.
//!
//! Everything that touches a binomial probability works on the natural-log
//! scale. Impossible events are `f64::NEG_INFINITY`, never NaN.

use std::f64::consts::{LN_2, PI};

use crate::error::{invalid, Result};

/// Natural-log probability, in `[-inf, 0]`.
pub type LogProb = f64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln C(n, k)`; caller guarantees `k <= n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn check_probability(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return invalid(format!("probability {theta} outside [0, 1]"));
    }
    Ok(())
}

/// `k * ln(p)` with the `0 * ln 0 = 0` convention.
fn xlogy(k: f64, p: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * p.ln()
    }
}

/// Binomial log-pmf `ln P(Y = k)` for `Y ~ Bin(n, theta)`.
pub fn log_binom_pmf(k: u64, n: u64, theta: f64) -> Result<LogProb> {
    check_probability(theta)?;
    if k > n {
        return invalid(format!("count {k} exceeds trials {n}"));
    }
    let value = ln_choose(n, k) + xlogy(k as f64, theta) + xlogy((n - k) as f64, 1.0 - theta);
    Ok(value.min(0.0))
}

/// Binomial log-cdf `ln P(Y <= c)`, summed term by term in log space.
pub fn log_binom_cdf(c: u64, n: u64, theta: f64) -> Result<LogProb> {
    check_probability(theta)?;
    if c > n {
        return invalid(format!("cutoff {c} exceeds trials {n}"));
    }
    if c == n {
        return Ok(0.0);
    }
    let terms = (0..=c)
        .map(|k| log_binom_pmf(k, n, theta))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&terms)?.min(0.0))
}

/// `ln Σ exp(terms)`, max-shifted. All `-inf` input gives `-inf`.
pub fn log_sum_exp(terms: &[f64]) -> Result<f64> {
    if terms.is_empty() {
        return invalid("log_sum_exp of an empty list");
    }
    Ok(log_sum_exp_unchecked(terms.iter().copied()))
}

pub(crate) fn log_sum_exp_unchecked(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub fn log1m_exp(x: f64) -> f64 {
    if x > 0.0 {
        f64::NAN
    } else if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("logit undefined at {p}"));
    }
    Ok((p / (1.0 - p)).ln())
}

pub fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(ln θ, ln(1-θ))` for `θ = inv_logit(x)`.
pub fn log_theta_pair(x: f64) -> (f64, f64) {
    (-softplus(-x), -softplus(x))
}

pub fn log_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * PI).ln()
}

pub fn log_cauchy(x: f64, location: f64, scale: f64) -> f64 {
    let z = (x - location) / scale;
    -(PI * scale).ln() - (z * z).ln_1p()
}

/// Half-Cauchy log-density on `(0, inf)`.
pub fn log_half_cauchy(s: f64, scale: f64) -> Result<LogProb> {
    if !(s > 0.0) || !(scale > 0.0) {
        return invalid(format!("half-Cauchy needs positive inputs, got s={s}, scale={scale}"));
    }
    Ok(LN_2 + log_cauchy(s, 0.0, scale))
}

const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 20_000;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// `ln I_x(a, b)`, the log regularized incomplete beta function.
///
/// `x` and `one_minus_x` are passed separately so callers holding both
/// (e.g. θ and 1-θ of a binomial) keep full relative precision in each.
pub fn ln_reg_inc_beta_parts(a: f64, b: f64, x: f64, one_minus_x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if one_minus_x <= 0.0 {
        return 0.0;
    }
    let ln_front = a * x.ln() + b * one_minus_x.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front + beta_continued_fraction(a, b, x).ln() - a.ln()
    } else {
        let ln_other = ln_front + beta_continued_fraction(b, a, one_minus_x).ln() - b.ln();
        log1m_exp(ln_other.min(0.0))
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        ln_reg_inc_beta_parts(a, b, x, 1.0 - x).exp()
    }
}

const QUANTILE_TOL: f64 = 1e-10;

/// Beta(a, b) quantile by bisection on the regularized incomplete beta.
pub fn beta_quantile(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(a > 0.0) || !(b > 0.0) {
        return invalid(format!("beta quantile needs p in [0,1], a,b > 0; got p={p}, a={a}, b={b}"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if reg_inc_beta(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact (Clopper–Pearson) two-sided interval for a binomial proportion.
pub fn clopper_pearson_interval(y: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 || y > n {
        return invalid(format!("invalid binomial counts y={y}, n={n}"));
    }
    clopper_pearson_real(y as f64, n as f64, level)
}

/// Clopper–Pearson bounds through the beta-quantile characterization, for
/// real-valued (continuity-corrected) event and trial totals.
pub fn clopper_pearson_real(y: f64, n: f64, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return invalid(format!("confidence level {level} outside (0, 1)"));
    }
    if !(n > 0.0) || !(y >= 0.0) || y > n {
        return invalid(format!("invalid binomial totals y={y}, n={n}"));
    }
    let alpha = 1.0 - level;
    let lo = if y == 0.0 { 0.0 } else { beta_quantile(alpha / 2.0, y, n - y + 1.0)? };
    let hi = if y == n { 1.0 } else { beta_quantile(1.0 - alpha / 2.0, y + 1.0, n - y)? };
    Ok((lo, hi))
}

/// Sample quantile with linear interpolation between order statistics
/// (the common "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (0 for fewer than two values).
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn factorial(n: u64) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    #[test]
    fn pmf_closed_forms() {
        assert_abs_diff_eq!(log_binom_pmf(0, 100, 0.025).unwrap(), 100.0 * 0.975f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_binom_pmf(0, 100, 0.025).unwrap(), -2.5318, epsilon = 1e-4);
        assert_eq!(log_binom_pmf(5, 5, 1.0).unwrap(), 0.0);
        assert_eq!(log_binom_pmf(0, 5, 0.0).unwrap(), 0.0);
        assert_eq!(log_binom_pmf(1, 5, 0.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn pmf_matches_factorial_arithmetic() {
        let choose = factorial(10) / (factorial(3) * factorial(7));
        assert_eq!(choose, 120.0);
        let oracle = (choose * 0.3f64.powi(3) * 0.7f64.powi(7)).ln();
        assert_abs_diff_eq!(log_binom_pmf(3, 10, 0.3).unwrap(), oracle, epsilon = 1e-13);
    }

    #[test]
    fn pmf_rejects_bad_arguments() {
        assert!(log_binom_pmf(11, 10, 0.3).is_err());
        assert!(log_binom_pmf(1, 10, -0.1).is_err());
        assert!(log_binom_pmf(1, 10, 1.5).is_err());
        assert!(log_binom_cdf(11, 10, 0.3).is_err());
    }

    #[test]
    fn cdf_cases() {
        assert_eq!(log_binom_cdf(7, 7, 0.4).unwrap(), 0.0);
        assert_eq!(log_binom_cdf(0, 100, 0.025).unwrap(), log_binom_pmf(0, 100, 0.025).unwrap());
        // direct linear-space sum with exact binomial coefficients
        let theta: f64 = 0.013;
        let oracle: f64 = [1.0, 100.0, 4950.0]
            .iter()
            .enumerate()
            .map(|(k, c)| c * theta.powi(k as i32) * (1.0 - theta).powi(100 - k as i32))
            .sum();
        assert_abs_diff_eq!(log_binom_cdf(2, 100, theta).unwrap(), oracle.ln(), epsilon = 1e-13);
    }

    #[test]
    fn log_sum_exp_cases() {
        assert_abs_diff_eq!(log_sum_exp(&[0.5f64.ln(), 0.5f64.ln()]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.3f64.ln()]).unwrap(), 0.3f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(log_sum_exp(&vec![0.001f64.ln(); 1000]).unwrap(), 0.0, epsilon = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]).unwrap(), f64::NEG_INFINITY);
        assert!(log_sum_exp(&[]).is_err());
    }

    #[test]
    fn logit_pair() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        // 1 / (1 + e^4) to 17 significant digits
        assert_abs_diff_eq!(inv_logit(-4.0), 0.017_986_209_962_091_56, epsilon = 1e-16);
        assert_abs_diff_eq!(inv_logit(logit(0.025).unwrap()), 0.025, epsilon = 1e-16);
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(inv_logit(-800.0) >= 0.0 && inv_logit(800.0) <= 1.0);
        let (lt, l1m) = log_theta_pair(-800.0);
        assert_abs_diff_eq!(lt, -800.0, epsilon = 1e-9);
        assert!(l1m.abs() < 1e-300);
    }

    #[test]
    fn log1m_exp_branches() {
        assert_abs_diff_eq!(log1m_exp(-1e-20), (1e-20f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log1m_exp(-50.0), -(-50.0f64).exp(), epsilon = 1e-30);
        assert_abs_diff_eq!(log1m_exp(0.5f64.ln()), 0.5f64.ln(), epsilon = 1e-15);
        assert_eq!(log1m_exp(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn half_cauchy_values() {
        assert_abs_diff_eq!(log_half_cauchy(1e-300, 25.0).unwrap(), (2.0 / (25.0 * PI)).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(log_half_cauchy(25.0, 25.0).unwrap(), (1.0 / (25.0 * PI)).ln(), epsilon = 1e-12);
        assert!(log_half_cauchy(0.0, 1.0).is_err());
        assert!(log_half_cauchy(1.0, -1.0).is_err());
    }

    #[test]
    fn half_cauchy_integrates_to_one() {
        // s = t / (1 - t) maps (0, 1) onto (0, inf); composite Simpson on t.
        let m = 200_000;
        let h = 1.0 / m as f64;
        let f = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                return if t <= 0.0 { 2.0 / (10.0 * PI) } else { 20.0 / PI };
            }
            let s = t / (1.0 - t);
            log_half_cauchy(s, 10.0).unwrap().exp() / ((1.0 - t) * (1.0 - t))
        };
        let mut acc = f(0.0) + f(1.0);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        assert_abs_diff_eq!(acc * h / 3.0, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn ln_gamma_accuracy() {
        for n in 1..=30u64 {
            assert_abs_diff_eq!(ln_gamma(n as f64), factorial(n - 1).ln(), epsilon = 1e-12 * factorial(n - 1).ln().abs().max(1.0));
        }
        assert_abs_diff_eq!(ln_gamma(0.5), PI.sqrt().ln(), epsilon = 1e-14);
    }

    #[test]
    fn incomplete_beta_matches_binomial_tail() {
        // I_{1-θ}(n-c, c+1) = P(Y <= c)
        for &(c, n, theta) in &[(2u64, 100u64, 0.013), (0, 10, 0.3), (9, 10, 0.3), (40, 200, 0.25)] {
            let direct = log_binom_cdf(c, n, theta).unwrap();
            let via_beta = ln_reg_inc_beta_parts((n - c) as f64, c as f64 + 1.0, 1.0 - theta, theta);
            assert_abs_diff_eq!(direct, via_beta, epsilon = 1e-12);
        }
    }

    /// Upper bound by bisection on the binomial tail P(Y <= y; p) = α/2.
    fn tail_bisection_upper(y: u64, n: u64, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let tail: f64 = (0..=y).map(|k| log_binom_pmf(k, n, mid).unwrap().exp()).sum();
            if tail > alpha / 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn tail_bisection_lower(y: u64, n: u64, alpha: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let tail: f64 = (y..=n).map(|k| log_binom_pmf(k, n, mid).unwrap().exp()).sum();
            if tail < alpha / 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn clopper_pearson_zero_count_closed_form() {
        let (lo, hi) = clopper_pearson_interval(0, 100, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        assert_abs_diff_eq!(hi, 1.0 - 0.025f64.powf(0.01), epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 0.0362, epsilon = 1e-4);
        assert_eq!(clopper_pearson_interval(10, 10, 0.95).unwrap().1, 1.0);
    }

    #[test]
    fn clopper_pearson_matches_tail_bisection() {
        let (lo, hi) = clopper_pearson_interval(5, 100, 0.95).unwrap();
        assert!(lo < 0.05 && 0.05 < hi);
        assert_abs_diff_eq!(hi, tail_bisection_upper(5, 100, 0.05), epsilon = 1e-9);
        assert_abs_diff_eq!(lo, tail_bisection_lower(5, 100, 0.05), epsilon = 1e-9);
    }

    #[test]
    fn clopper_pearson_rejects_bad_input() {
        assert!(clopper_pearson_interval(11, 10, 0.95).is_err());
        assert!(clopper_pearson_interval(1, 10, 1.0).is_err());
        assert!(clopper_pearson_interval(0, 0, 0.95).is_err());
    }

    #[test]
    fn clopper_pearson_coverage_by_enumeration() {
        for n in 1..=30u64 {
            let intervals: Vec<_> = (0..=n).map(|y| clopper_pearson_interval(y, n, 0.95).unwrap()).collect();
            for g in 1..100 {
                let theta = g as f64 / 100.0;
                let coverage: f64 = intervals
                    .iter()
                    .enumerate()
                    .filter(|(_, (lo, hi))| *lo <= theta && theta <= *hi)
                    .map(|(y, _)| log_binom_pmf(y as u64, n, theta).unwrap().exp())
                    .sum();
                assert!(coverage >= 0.95 - 1e-9, "n={n} theta={theta} coverage={coverage}");
            }
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_sorted(&xs, 0.5), 2.5);
    }
}
