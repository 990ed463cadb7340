//! Bayesian meta-analysis of binomial incidence when some studies report
//! only that a count fell below (or above, or between) a cutoff.
//!
//! The likelihood of each study is the exact binomial probability of its
//! reported outcome, so censored studies contribute tail or interval mass
//! instead of being dropped or imputed.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod exec;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod simulation;
pub mod statfns;
pub mod synthetic;

pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{CensorStatus, CensoredBinomialModel, ModelSpec, PriorKind, StudyRecord};
pub use sampler::{FitOutput, PosteriorSummary, SamplerConfig};
