//! The censored-binomial model as an engine target.
//!
//! Hierarchical blocks get extra moves that leave every linear predictor
//! unchanged, so only prior terms enter their acceptance ratios:
//!
//! * rescale: `log σ += u`, `z *= e^{-u}` (Jacobian `e^{-uL}`)
//! * shift: `μ += σ v`, `z -= v`
//! * an exact Gibbs draw of the hyper-mean contrasts given their sum, since
//!   the likelihood sees the hyper-means only through `Σ_b μ_b`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::engine::{accept, Target};
use crate::model::CensoredBinomialModel;

#[derive(Debug, Clone, Copy)]
enum ExtraMove {
    Rescale { block: usize },
    Shift { block: usize },
    ContrastRefresh,
}

pub(crate) struct ModelTarget<'a> {
    model: &'a CensoredBinomialModel,
    moves: Vec<ExtraMove>,
    free_means: Vec<usize>,
}

impl<'a> ModelTarget<'a> {
    pub(crate) fn new(model: &'a CensoredBinomialModel) -> Self {
        let mut moves = Vec::new();
        let mut free_means = Vec::new();
        for (b, lay) in model.layout().iter().enumerate() {
            if lay.log_scale.is_some() {
                moves.push(ExtraMove::Rescale { block: b });
            }
            if let (Some(m), Some(_)) = (lay.hyper_mean, lay.log_scale) {
                moves.push(ExtraMove::Shift { block: b });
                free_means.push(m);
            }
        }
        if free_means.len() >= 2 {
            moves.push(ExtraMove::ContrastRefresh);
        }
        ModelTarget { model, moves, free_means }
    }

    pub(crate) fn extra_move_names(&self) -> Vec<String> {
        let blocks = self.model.blocks();
        self.moves
            .iter()
            .map(|m| match m {
                ExtraMove::Rescale { block } => format!("rescale.{}", blocks[*block].name),
                ExtraMove::Shift { block } => format!("shift.{}", blocks[*block].name),
                ExtraMove::ContrastRefresh => "hyper_mean_contrast".to_string(),
            })
            .collect()
    }

    fn rescale(&self, b: usize, x: &mut [f64], step: f64, rng: &mut ChaCha8Rng) -> bool {
        let lay = self.model.layout()[b];
        let s = lay.log_scale.expect("rescale on a block without a scale");
        let u: f64 = step * rng.sample::<f64, _>(StandardNormal);
        let old_prior = self.model.flat_block_prior(x, b);
        let effects = lay.effects_start..lay.effects_start + lay.n_levels;
        let saved: Vec<f64> = x[effects.clone()].to_vec();
        let saved_scale = x[s];
        x[s] += u;
        let shrink = (-u).exp();
        x[effects.clone()].iter_mut().for_each(|z| *z *= shrink);
        let log_ratio = self.model.flat_block_prior(x, b) - old_prior - u * lay.n_levels as f64;
        let ok = accept(log_ratio, rng);
        if !ok {
            x[s] = saved_scale;
            x[effects].copy_from_slice(&saved);
        }
        ok
    }

    fn shift(&self, b: usize, x: &mut [f64], step: f64, rng: &mut ChaCha8Rng) -> bool {
        let lay = self.model.layout()[b];
        let (m, s) = (lay.hyper_mean.unwrap(), lay.log_scale.unwrap());
        let v: f64 = step * rng.sample::<f64, _>(StandardNormal);
        let old_prior = self.model.flat_block_prior(x, b);
        let effects = lay.effects_start..lay.effects_start + lay.n_levels;
        let saved: Vec<f64> = x[effects.clone()].to_vec();
        let saved_mean = x[m];
        x[m] += x[s].exp() * v;
        x[effects.clone()].iter_mut().for_each(|z| *z -= v);
        let ok = accept(self.model.flat_block_prior(x, b) - old_prior, rng);
        if !ok {
            x[m] = saved_mean;
            x[effects].copy_from_slice(&saved);
        }
        ok
    }

    fn refresh_contrasts(&self, x: &mut [f64], rng: &mut ChaCha8Rng) {
        let k = self.free_means.len() as f64;
        let sum: f64 = self.free_means.iter().map(|&m| x[m]).sum();
        let sd = self.model.spec().hyper_mean_sd;
        let z: Vec<f64> = self.free_means.iter().map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let z_bar = z.iter().sum::<f64>() / k;
        for (&m, zi) in self.free_means.iter().zip(&z) {
            x[m] = sum / k + zi - z_bar;
        }
    }
}

impl Target for ModelTarget<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.model.flat_log_density(x)
    }

    fn coordinate_log_density(&self, x: &[f64], i: usize) -> f64 {
        self.model.coordinate_log_density(x, i)
    }

    fn n_extra_moves(&self) -> usize {
        self.moves.len()
    }

    fn extra_move(&self, k: usize, x: &mut [f64], step: f64, rng: &mut ChaCha8Rng) -> Option<bool> {
        match self.moves[k] {
            ExtraMove::Rescale { block } => Some(self.rescale(block, x, step, rng)),
            ExtraMove::Shift { block } => Some(self.shift(block, x, step, rng)),
            ExtraMove::ContrastRefresh => {
                self.refresh_contrasts(x, rng);
                None
            }
        }
    }
}
