//! Synthetic stand-in for a rare adverse-event meta-analysis: 125 studies
//! of five checkpoint inhibitors at 20 drug-dose schedules across 12
//! cancer types, with grade 3+ counts hidden below per-study reporting
//! cutoffs.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal};

use crate::model::{CensorStatus, StudyRecord};
use crate::rng::{stream, Purpose};
use crate::statfns::inv_logit;

pub const DEFAULT_SEED: u64 = 20_190_830;
pub const N_STUDIES: usize = 125;

pub const DRUG_DOSES: [(&str, &str); 20] = [
    ("pd1_a", "pd1_a_1mg_q3w"),
    ("pd1_a", "pd1_a_3mg_q2w"),
    ("pd1_a", "pd1_a_10mg_q2w"),
    ("pd1_a", "pd1_a_240mg_q2w"),
    ("pd1_a", "pd1_a_480mg_q4w"),
    ("pd1_b", "pd1_b_2mg_q3w"),
    ("pd1_b", "pd1_b_10mg_q2w"),
    ("pd1_b", "pd1_b_10mg_q3w"),
    ("pd1_b", "pd1_b_200mg_q3w"),
    ("pdl1_a", "pdl1_a_10mg_q2w"),
    ("pdl1_a", "pdl1_a_15mg_q3w"),
    ("pdl1_a", "pdl1_a_20mg_q3w"),
    ("pdl1_a", "pdl1_a_1200mg_q3w"),
    ("pdl1_b", "pdl1_b_10mg_q2w"),
    ("pdl1_b", "pdl1_b_20mg_q2w"),
    ("pdl1_b", "pdl1_b_1500mg_q4w"),
    ("pdl1_c", "pdl1_c_3mg_q2w"),
    ("pdl1_c", "pdl1_c_10mg_q2w"),
    ("pdl1_c", "pdl1_c_10mg_q3w"),
    ("pdl1_c", "pdl1_c_20mg_q2w"),
];

pub const CANCER_TYPES: [&str; 12] = [
    "nsclc", "melanoma", "rcc", "urothelial", "hnscc", "gastric", "hcc", "sclc", "breast", "ovarian", "colorectal",
    "hodgkin",
];

/// Reporting rules: events are listed only at or above this incidence.
/// `None` means every count is reported.
const REPORTING_CUTOFFS: [(Option<f64>, f64); 5] =
    [(None, 0.40), (Some(0.01), 0.22), (Some(0.03), 0.18), (Some(0.05), 0.12), (Some(0.10), 0.08)];

const BASE_LOGIT: f64 = -5.3;

/// Generates the dataset; factor columns are `drug`, `drug_dose` and
/// `cancer_type`.
pub fn application_dataset(seed: u64) -> Vec<StudyRecord> {
    let mut rng = stream(seed, Purpose::Synthetic, 0, 0);
    let normal = |sd: f64| Normal::new(0.0, sd).expect("positive sd");
    let dose_effects: Vec<f64> = DRUG_DOSES.iter().map(|_| normal(0.25).sample(&mut rng)).collect();
    // Pneumonitis is more common in lung cancer.
    let cancer_effects: Vec<f64> = CANCER_TYPES
        .iter()
        .map(|c| normal(0.3).sample(&mut rng) + if *c == "nsclc" || *c == "sclc" { 0.6 } else { 0.0 })
        .collect();
    let sizes = LogNormal::new(160f64.ln() - 0.18, 0.6).expect("valid lognormal");
    let study_sd = normal(0.3);

    (0..N_STUDIES)
        .map(|j| {
            // The first studies cover every level once.
            let dose = if j < DRUG_DOSES.len() { j } else { rng.random_range(0..DRUG_DOSES.len()) };
            let cancer = if j < CANCER_TYPES.len() { j } else { rng.random_range(0..CANCER_TYPES.len()) };
            let n = (sizes.sample(&mut rng).round() as u64).clamp(20, 800);
            let theta = inv_logit(BASE_LOGIT + dose_effects[dose] + cancer_effects[cancer] + study_sd.sample(&mut rng));
            let y = Binomial::new(n, theta).expect("valid binomial").sample(&mut rng);
            let cutoff = REPORTING_CUTOFFS.choose_weighted(&mut rng, |c| c.1).expect("positive weights").0;
            let outcome = match cutoff {
                Some(r) => {
                    let c = (r * n as f64).ceil() as u64 - 1;
                    if y <= c {
                        CensorStatus::LeftCensored { c }
                    } else {
                        CensorStatus::Observed { y }
                    }
                }
                None => CensorStatus::Observed { y },
            };
            let (drug, drug_dose) = DRUG_DOSES[dose];
            StudyRecord::new(format!("trial_{:03}", j + 1), n, outcome)
                .with_level("drug", drug)
                .with_level("drug_dose", drug_dose)
                .with_level("cancer_type", CANCER_TYPES[cancer])
        })
        .collect()
}
