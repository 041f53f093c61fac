use serde::{Deserialize, Serialize};

use super::accountant::{AccountantState, EpsilonReport};
use super::PrivacyBudget;
use crate::error::{Error, Result};

/// Smallest noise multiplier the calibration will return.
pub const SIGMA_FLOOR: f64 = 0.5;
pub const MAX_BISECTION_ITERS: usize = 200;
const SIGMA_CEILING: f64 = 1e7;
/// Accept any achieved epsilon in `[(1 - TOLERANCE) * target, target]`.
const TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    pub epsilon: f64,
    pub best_order: u32,
    pub iterations: usize,
    /// The target is looser than what `SIGMA_FLOOR` already achieves.
    pub at_floor: bool,
}

/// Epsilon after `steps` fresh steps at `(q, sigma)`.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<EpsilonReport> {
    AccountantState::new().compose(q, sigma, steps)?.to_epsilon(delta)
}

/// Finds a noise multiplier whose achieved epsilon lies within 1% below
/// `target.epsilon`, never above.
///
/// The upper end of the bracket doubles from `2 * SIGMA_FLOOR` until it
/// satisfies the target; then the bracket is bisected. If even the floor
/// meets the target, the floor is returned with `at_floor` set.
pub fn calibrate_sigma(target: &PrivacyBudget, q: f64, steps: u64) -> Result<Calibration> {
    target.validate()?;
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::invalid(format!("sample rate must lie in (0, 1], got {q}")));
    }
    if steps == 0 {
        return Err(Error::invalid("calibration needs at least one step"));
    }
    let eps = |sigma: f64| epsilon_for(q, sigma, steps, target.delta);
    let fail = |lo: f64, hi: f64, reason: &str| Error::Calibration {
        target: target.epsilon,
        lo,
        hi,
        reason: reason.to_string(),
    };

    let at_floor = eps(SIGMA_FLOOR)?;
    if at_floor.epsilon <= target.epsilon {
        return Ok(Calibration {
            sigma: SIGMA_FLOOR,
            epsilon: at_floor.epsilon,
            best_order: at_floor.best_order,
            iterations: 0,
            at_floor: true,
        });
    }

    let mut lo = SIGMA_FLOOR;
    let mut hi = 2.0 * SIGMA_FLOOR;
    loop {
        if eps(hi)?.epsilon <= target.epsilon {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > SIGMA_CEILING {
            return Err(fail(
                lo,
                hi,
                "no noise multiplier reaches the target; delta term alone exceeds it",
            ));
        }
    }

    for iter in 1..=MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        let r = eps(mid)?;
        if r.epsilon <= target.epsilon {
            if r.epsilon >= (1.0 - TOLERANCE) * target.epsilon {
                return Ok(Calibration {
                    sigma: mid,
                    epsilon: r.epsilon,
                    best_order: r.best_order,
                    iterations: iter,
                    at_floor: false,
                });
            }
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(fail(lo, hi, "bisection did not converge"))
}
