use super::{check_len, softmax3, Classifier, GradVec, ModelConfig, ParamVector, Probs};
use crate::corpus::{LabeledExample, NUM_CLASSES};
use crate::error::{Error, Result};

/// Multinomial logistic regression over hashed sparse features.
#[derive(Debug, Clone, Copy)]
pub struct LinearModel {
    feature_dim: usize,
}

impl LinearModel {
    pub fn new(config: &ModelConfig) -> Self {
        LinearModel {
            feature_dim: config.feature_dim,
        }
    }

    pub fn weight_index(&self, class: usize, feature: usize) -> usize {
        class * self.feature_dim + feature
    }

    pub fn bias_index(&self, class: usize) -> usize {
        NUM_CLASSES * self.feature_dim + class
    }

    fn logits(&self, params: &[f64], example: &LabeledExample) -> Result<Probs> {
        check_len(params, self.param_count())?;
        let mut z = [0.0; NUM_CLASSES];
        for (c, zc) in z.iter_mut().enumerate() {
            let mut acc = params[self.bias_index(c)];
            for &(i, x) in &example.features {
                let i = i as usize;
                if i >= self.feature_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.feature_dim,
                        got: i + 1,
                    });
                }
                acc += params[self.weight_index(c, i)] * x;
            }
            *zc = acc;
        }
        Ok(z)
    }
}

impl Classifier for LinearModel {
    fn param_count(&self) -> usize {
        NUM_CLASSES * self.feature_dim + NUM_CLASSES
    }

    fn init_params(&self) -> ParamVector {
        ParamVector::zeros(self.param_count())
    }

    fn forward(&self, params: &[f64], example: &LabeledExample) -> Result<Probs> {
        Ok(softmax3(&self.logits(params, example)?).0)
    }

    /// Cross-entropy gradient `(p - y) x^T` for the weights and `p - y` for the biases.
    fn loss_and_grad(&self, params: &[f64], example: &LabeledExample) -> Result<(f64, GradVec)> {
        let z = self.logits(params, example)?;
        let (p, lse) = softmax3(&z);
        let y = example.label.index();
        let loss = (lse - z[y]).max(0.0);
        let mut entries = Vec::with_capacity(NUM_CLASSES * (example.features.len() + 1));
        for (c, &pc) in p.iter().enumerate() {
            let delta = pc - if c == y { 1.0 } else { 0.0 };
            for &(i, x) in &example.features {
                entries.push((self.weight_index(c, i as usize), delta * x));
            }
        }
        for (c, &pc) in p.iter().enumerate() {
            entries.push((self.bias_index(c), pc - if c == y { 1.0 } else { 0.0 }));
        }
        Ok((
            loss,
            GradVec::Sparse {
                len: self.param_count(),
                entries,
            },
        ))
    }
}
