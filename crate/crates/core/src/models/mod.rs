//! Three-class classifiers with exact per-example gradients.
//!
//! All parameters of a model live in one flat [`ParamVector`] whose block
//! layout is fixed by the [`ModelConfig`]:
//!
//! * linear: `W[class][feature]` row-major (`3 * feature_dim`), then `b[3]`.
//! * tiny transformer: see [`transformer::Layout`].

mod checkpoint;
mod grad;
mod linear;
pub mod transformer;

use serde::{Deserialize, Serialize};

use crate::corpus::{FeaturizeConfig, Label, LabeledExample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::hash::digest_f64s;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointHeader, LAYOUT_VERSION,
};
pub use grad::GradVec;
pub use linear::LinearModel;
pub use transformer::TinyTransformer;

pub type Probs = [f64; NUM_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Linear,
    TinyTransformer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub vocab_hash_dim: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    pub num_classes: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let f = FeaturizeConfig::default();
        ModelConfig {
            kind: ModelKind::Linear,
            feature_dim: f.feature_dim,
            vocab_hash_dim: f.vocab_hash_dim,
            embed_dim: 16,
            num_heads: 2,
            ff_dim: 32,
            max_len: f.max_len,
            num_classes: NUM_CLASSES,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.featurize_config().validate()?;
        if self.num_classes != NUM_CLASSES {
            return Err(Error::invalid(format!("num_classes must be {NUM_CLASSES}")));
        }
        if self.kind == ModelKind::TinyTransformer {
            if self.embed_dim == 0 || self.num_heads == 0 || self.ff_dim == 0 {
                return Err(Error::invalid("embed_dim, num_heads and ff_dim must be positive"));
            }
            if !self.embed_dim.is_multiple_of(self.num_heads) {
                return Err(Error::invalid(format!(
                    "embed_dim {} is not divisible by num_heads {}",
                    self.embed_dim, self.num_heads
                )));
            }
        }
        Ok(())
    }

    pub fn featurize_config(&self) -> FeaturizeConfig {
        FeaturizeConfig {
            feature_dim: self.feature_dim,
            vocab_hash_dim: self.vocab_hash_dim,
            max_len: self.max_len,
        }
    }

    pub fn param_count(&self) -> usize {
        match self.kind {
            ModelKind::Linear => LinearModel::new(self).param_count(),
            ModelKind::TinyTransformer => TinyTransformer::new(self).param_count(),
        }
    }
}

/// Flat, ordered vector of every model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(n: usize) -> Self {
        ParamVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn digest(&self) -> u64 {
        digest_f64s(&self.0)
    }

    /// True when both vectors hold the same bit patterns.
    pub fn bit_eq(&self, other: &ParamVector) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGradient {
    pub example_id: usize,
    pub grad: GradVec,
    pub loss: f64,
}

/// Shared interface of the two model families. Parameters are passed in as
/// slices so the same model object can serve many parameter vectors.
pub trait Classifier {
    fn param_count(&self) -> usize;
    fn init_params(&self) -> ParamVector;
    fn forward(&self, params: &[f64], example: &LabeledExample) -> Result<Probs>;
    fn loss_and_grad(&self, params: &[f64], example: &LabeledExample) -> Result<(f64, GradVec)>;
}

fn with_model<T>(config: &ModelConfig, f: impl FnOnce(&dyn Classifier) -> T) -> T {
    match config.kind {
        ModelKind::Linear => f(&LinearModel::new(config)),
        ModelKind::TinyTransformer => f(&TinyTransformer::new(config)),
    }
}

pub(crate) fn check_len(params: &[f64], expected: usize) -> Result<()> {
    if params.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            got: params.len(),
        });
    }
    Ok(())
}

pub fn init_params(config: &ModelConfig) -> Result<ParamVector> {
    config.validate()?;
    Ok(with_model(config, |m| m.init_params()))
}

pub fn forward(params: &ParamVector, example: &LabeledExample, config: &ModelConfig) -> Result<Probs> {
    with_model(config, |m| m.forward(params.as_slice(), example))
}

/// Class probabilities for raw text. Text with no tokens is an error.
pub fn forward_text(params: &ParamVector, text: &str, config: &ModelConfig) -> Result<Probs> {
    let (features, token_ids) = crate::corpus::featurize_one(text, &config.featurize_config())
        .ok_or_else(|| Error::invalid("text contains no tokens"))?;
    let example = LabeledExample {
        id: 0,
        text: text.to_string(),
        features,
        token_ids,
        label: Label::Neutral,
    };
    forward(params, &example, config)
}

/// Loss and gradient of every example, each computed in isolation, in input order.
pub fn per_example_grads(
    params: &ParamVector,
    batch: &[&LabeledExample],
    config: &ModelConfig,
) -> Result<Vec<PerExampleGradient>> {
    if batch.is_empty() {
        return Err(Error::invalid("per_example_grads needs a non-empty batch"));
    }
    with_model(config, |m| {
        batch
            .iter()
            .map(|ex| {
                let (loss, grad) = m.loss_and_grad(params.as_slice(), ex)?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("loss of example {}", ex.id)));
                }
                Ok(PerExampleGradient {
                    example_id: ex.id,
                    grad,
                    loss,
                })
            })
            .collect()
    })
}

/// Index of the largest probability; ties go to the lowest class index.
pub fn argmax(probs: &Probs) -> usize {
    let mut best = 0;
    for c in 1..probs.len() {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    best
}

pub fn predict(params: &ParamVector, example: &LabeledExample, config: &ModelConfig) -> Result<Label> {
    let probs = forward(params, example, config)?;
    Ok(Label::from_index(argmax(&probs)).expect("argmax within class range"))
}

pub fn evaluate(params: &ParamVector, test: &[LabeledExample], config: &ModelConfig) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    with_model(config, |m| {
        let mut correct = 0usize;
        for ex in test {
            let probs = m.forward(params.as_slice(), ex)?;
            if argmax(&probs) == ex.label.index() {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    })
}

/// Numerically stable softmax. Returns the probabilities and log-sum-exp.
pub(crate) fn softmax3(logits: &Probs) -> (Probs, f64) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; NUM_CLASSES];
    let mut s = 0.0;
    for c in 0..NUM_CLASSES {
        p[c] = (logits[c] - m).exp();
        s += p[c];
    }
    for v in &mut p {
        *v /= s;
    }
    (p, m + s.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    }

    #[test]
    fn rejects_bad_transformer_config() {
        let cfg = ModelConfig {
            kind: ModelKind::TinyTransformer,
            embed_dim: 10,
            num_heads: 3,
            ..Default::default()
        };
        assert!(init_params(&cfg).is_err());
        let cfg = ModelConfig {
            num_classes: 2,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn softmax_is_normalized_for_extreme_logits() {
        let (p, lse) = softmax3(&[1000.0, -1000.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((lse - 1000.0).abs() < 1e-9);
    }
}
