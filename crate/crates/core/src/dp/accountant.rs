//! Rényi-DP accountant for the sampled Gaussian mechanism.
//!
//! For integer order `a`, sample rate `q` and noise multiplier `s`, one step
//! costs at most
//!
//! ```text
//! rdp(a) = ln( sum_{k=0..a} C(a,k) (1-q)^(a-k) q^k exp(k(k-1) / (2 s^2)) ) / (a-1)
//! ```
//!
//! Because the binomial weights sum to one, the argument of the log is
//! `1 + S` with `S = sum_{k>=2} C(a,k) (1-q)^(a-k) q^k expm1(k(k-1)/(2 s^2))`,
//! which is non-negative term by term. `S` is accumulated as a log-sum-exp
//! and the result taken as `ln1p(S)`, so nothing overflows and tiny values
//! keep full relative precision.
//!
//! Steps compose additively per order; `epsilon = min_a [rdp_total(a) + ln(1/delta)/(a-1)]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate_delta;
use crate::error::{Error, Result};

/// Integer orders 2..=64 plus 128 and 256.
pub const DEFAULT_ORDERS: [u32; 65] = {
    let mut o = [0u32; 65];
    let mut i = 0;
    while i < 63 {
        o[i] = i as u32 + 2;
        i += 1;
    }
    o[63] = 128;
    o[64] = 256;
    o
};

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(e^x - 1)` for `x >= 0`.
fn log_expm1(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else if x < 1.0 {
        x.exp_m1().ln()
    } else {
        x + (-(-x).exp()).ln_1p()
    }
}

/// `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 36.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("sample rate must lie in [0, 1], got {q}")));
    }
    if alpha < 2 {
        return Err(Error::invalid(format!("RDP order must be at least 2, got {alpha}")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::invalid(format!(
            "noise multiplier {sigma} gives unbounded privacy loss at sample rate {q}"
        )));
    }
    if sigma.is_infinite() {
        return Ok(0.0);
    }
    let a = alpha as f64;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    if q == 1.0 {
        // Only the k = alpha term survives.
        return Ok(a * (a - 1.0) * inv_two_var / (a - 1.0));
    }
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();

    let mut ln_binom = 0.0f64;
    let mut log_s = f64::NEG_INFINITY;
    for k in 1..=alpha {
        let kf = k as f64;
        ln_binom += ((a - kf + 1.0) / kf).ln();
        if k < 2 {
            continue;
        }
        let lb = if k == alpha { 0.0 } else { ln_binom };
        let term = lb + (a - kf) * ln_1mq + kf * ln_q + log_expm1(kf * (kf - 1.0) * inv_two_var);
        log_s = log_add_exp(log_s, term);
    }
    let rdp = softplus(log_s) / (a - 1.0);
    Ok(rdp.max(0.0))
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    sample_rate: f64,
    noise_multiplier: f64,
    steps: u64,
    rdp: Vec<f64>,
}

/// Accumulated RDP per order.
///
/// Steps are grouped into segments keyed by the exact bits of `(q, sigma)`.
/// Totals are recomputed from the segments in key order, so composing
/// `a` steps then `b` steps gives the same bits as composing `a + b` at once,
/// whatever order the segments arrived in.
#[derive(Debug, Clone, PartialEq)]
pub struct AccountantState {
    orders: Vec<u32>,
    rdp_totals: Vec<f64>,
    steps_recorded: u64,
    segments: BTreeMap<(u64, u64), Segment>,
}

impl Default for AccountantState {
    fn default() -> Self {
        Self::with_orders(DEFAULT_ORDERS.to_vec()).expect("default orders are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub epsilon: f64,
    pub best_order: u32,
    /// True when no mechanism step has been recorded.
    pub no_mechanism: bool,
}

impl AccountantState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_orders(mut orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() || orders.iter().any(|&a| a < 2) {
            return Err(Error::invalid("RDP orders must be non-empty and at least 2"));
        }
        orders.sort_unstable();
        orders.dedup();
        let n = orders.len();
        Ok(AccountantState {
            orders,
            rdp_totals: vec![0.0; n],
            steps_recorded: 0,
            segments: BTreeMap::new(),
        })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn rdp_totals(&self) -> &[f64] {
        &self.rdp_totals
    }

    pub fn steps_recorded(&self) -> u64 {
        self.steps_recorded
    }

    /// Records `steps` applications of the sampled Gaussian mechanism.
    pub fn compose(&self, q: f64, sigma: f64, steps: u64) -> Result<Self> {
        let mut next = self.clone();
        next.compose_in_place(q, sigma, steps)?;
        Ok(next)
    }

    pub fn compose_in_place(&mut self, q: f64, sigma: f64, steps: u64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let key = (q.to_bits(), sigma.to_bits());
        if let Some(seg) = self.segments.get_mut(&key) {
            seg.steps += steps;
        } else {
            let rdp = self
                .orders
                .iter()
                .map(|&a| rdp_subsampled_gaussian(q, sigma, a))
                .collect::<Result<Vec<_>>>()?;
            self.segments.insert(
                key,
                Segment {
                    sample_rate: q,
                    noise_multiplier: sigma,
                    steps,
                    rdp,
                },
            );
        }
        self.steps_recorded += steps;
        self.recompute();
        Ok(())
    }

    /// Merges another accountant's history into this one (orders must match).
    pub fn merge(&mut self, other: &AccountantState) -> Result<()> {
        if self.orders != other.orders {
            return Err(Error::invalid("cannot merge accountants with different orders"));
        }
        for seg in other.segments.values() {
            self.compose_in_place(seg.sample_rate, seg.noise_multiplier, seg.steps)?;
        }
        Ok(())
    }

    fn recompute(&mut self) {
        for (i, total) in self.rdp_totals.iter_mut().enumerate() {
            *total = self.segments.values().map(|s| s.steps as f64 * s.rdp[i]).sum();
        }
    }

    pub fn to_epsilon(&self, delta: f64) -> Result<EpsilonReport> {
        validate_delta(delta)?;
        let log_inv_delta = -delta.ln();
        let mut best = (f64::INFINITY, self.orders[0]);
        for (&a, &total) in self.orders.iter().zip(&self.rdp_totals) {
            let eps = total + log_inv_delta / (a as f64 - 1.0);
            if eps < best.0 {
                best = (eps, a);
            }
        }
        Ok(EpsilonReport {
            epsilon: best.0,
            best_order: best.1,
            no_mechanism: self.steps_recorded == 0,
        })
    }

    /// One line of the accountant trace file.
    pub fn trace_line(&self, step: u64) -> serde_json::Value {
        serde_json::json!({
            "step": step,
            "orders": self.orders,
            "rdp_totals": self.rdp_totals,
        })
    }
}
