//! Epoch/lot training loop shared by centralized training and FedAvg clients.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledExample;
use crate::dp::{dpsgd_step_audited, sgd_step, DpSgdParams, DEFAULT_CLIP_NORM};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::models::{per_example_grads, ModelConfig, ModelKind, ParamVector};
use crate::rng;

const NOISE_KEY: u64 = 0x6e_6f69_7365;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CentralConfig {
    pub epochs: usize,
    pub lot_size: usize,
    /// Defaults by model kind when unset: 1.0 linear, 0.01 transformer.
    pub learning_rate: Option<f64>,
    pub clip_norm: f64,
}

impl Default for CentralConfig {
    fn default() -> Self {
        CentralConfig {
            epochs: 5,
            lot_size: 32,
            learning_rate: None,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }
}

impl CentralConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.lot_size == 0 {
            return Err(Error::invalid("epochs and lot_size must be at least 1"));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid("learning_rate must be positive"));
            }
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        Ok(())
    }

    pub fn learning_rate_for(&self, kind: ModelKind) -> f64 {
        self.learning_rate.unwrap_or(match kind {
            ModelKind::Linear => 1.0,
            ModelKind::TinyTransformer => 0.01,
        })
    }
}

/// Update rule applied to each lot.
#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    Sgd { learning_rate: f64 },
    DpSgd(DpSgdParams),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub steps: u64,
    /// Largest post-clip per-example norm seen (DP-SGD only).
    pub max_post_clip_norm: Option<f64>,
}

/// Number of lots per epoch for `n` examples.
pub fn lots_per_epoch(n: usize, lot_size: usize) -> usize {
    n.div_ceil(lot_size.min(n).max(1))
}

/// Runs `epochs` passes over `examples`. Each epoch shuffles under the
/// stream `(seed, epoch)` and cuts consecutive lots of `min(lot_size, n)`;
/// the last lot of an epoch may be shorter. DP noise for step `s` is keyed by
/// `derive_seed(seed, [NOISE_KEY, s])`.
pub fn train_epochs(
    mut params: ParamVector,
    examples: &[&LabeledExample],
    model: &ModelConfig,
    epochs: usize,
    lot_size: usize,
    rule: StepRule,
    seed: u64,
) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(Error::invalid("cannot train on an empty example set"));
    }
    if lot_size == 0 {
        return Err(Error::invalid("lot_size must be at least 1"));
    }
    let lot = lot_size.min(examples.len());
    let mut steps = 0u64;
    let mut max_norm: Option<f64> = None;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(seed, epoch as u64));
        for chunk in order.chunks(lot) {
            let batch: Vec<&LabeledExample> = chunk.iter().map(|&i| examples[i]).collect();
            let grads = per_example_grads(&params, &batch, model)?;
            params = match rule {
                StepRule::Sgd { learning_rate } => sgd_step(&params, &grads, learning_rate)?,
                StepRule::DpSgd(p) => {
                    let (next, norms) =
                        dpsgd_step_audited(&params, &grads, &p, derive_seed(seed, &[NOISE_KEY, steps]))?;
                    let m = norms.into_iter().fold(0.0f64, f64::max);
                    max_norm = Some(max_norm.map_or(m, |x| x.max(m)));
                    next
                }
            };
            steps += 1;
        }
    }
    Ok(TrainOutcome {
        params,
        steps,
        max_post_clip_norm: max_norm,
    })
}

/// Centralized training from the model's initial parameters.
pub fn train_centralized(
    train: &[LabeledExample],
    model: &ModelConfig,
    cfg: &CentralConfig,
    rule: StepRule,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let init = crate::models::init_params(model)?;
    let refs: Vec<&LabeledExample> = train.iter().collect();
    train_epochs(init, &refs, model, cfg.epochs, cfg.lot_size, rule, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lot_counts() {
        assert_eq!(lots_per_epoch(2400, 32), 75);
        assert_eq!(lots_per_epoch(10, 32), 1);
        assert_eq!(lots_per_epoch(33, 32), 2);
    }
}
