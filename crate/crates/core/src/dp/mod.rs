//! DP-SGD: per-example clipping, Gaussian noise, and Rényi-DP accounting.

mod accountant;
mod calibrate;
mod clip;
mod sgd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use accountant::{rdp_subsampled_gaussian, AccountantState, EpsilonReport, DEFAULT_ORDERS};
pub use calibrate::{calibrate_sigma, epsilon_for, Calibration, MAX_BISECTION_ITERS, SIGMA_FLOOR};
pub use clip::{clip, clip_grad};
pub use sgd::{dpsgd_step, dpsgd_step_audited, sgd_step};

pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_CLIP_NORM: f64 = 1.0;

/// An (epsilon, delta) target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        let b = PrivacyBudget { epsilon, delta };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        validate_delta(self.delta)
    }
}

pub(crate) fn validate_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSgdParams {
    pub clip_norm: f64,
    /// Zero disables noise.
    pub noise_multiplier: f64,
    pub sample_rate: f64,
    pub learning_rate: f64,
    pub lot_size: usize,
}

impl DpSgdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::invalid("clip_norm must be positive"));
        }
        if !(self.noise_multiplier >= 0.0 && self.noise_multiplier.is_finite()) {
            return Err(Error::invalid(format!(
                "noise multiplier must be non-negative, got {}",
                self.noise_multiplier
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::invalid("sample_rate must lie in (0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if self.lot_size == 0 {
            return Err(Error::invalid("lot_size must be at least 1"));
        }
        Ok(())
    }
}
