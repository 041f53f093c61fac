//! In-process FedAvg simulator.
//!
//! Each round the server samples `ceil(client_fraction * N)` clients, every
//! selected client trains from the round-start global parameters on its own
//! partition, and the server replaces the global model with the weighted
//! average of the returned parameters. With DP enabled each client runs
//! DP-SGD on its lots and keeps its own accountant at its local sample rate;
//! the reported epsilon is the worst client's.

use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClientPartition, LabeledExample};
use crate::dp::{AccountantState, DpSgdParams, DEFAULT_CLIP_NORM, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::hash::derive_seed;
use crate::models::{evaluate, init_params, ModelConfig, ParamVector};
use crate::rng;
use crate::train::{lots_per_epoch, train_epochs, StepRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    ByExampleCount,
    Uniform,
}

/// Client-side DP-SGD settings. The noise multiplier is normally filled in
/// by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalDp {
    pub clip_norm: f64,
    pub noise_multiplier: Option<f64>,
    pub delta: f64,
}

impl Default for LocalDp {
    fn default() -> Self {
        LocalDp {
            clip_norm: DEFAULT_CLIP_NORM,
            noise_multiplier: None,
            delta: DEFAULT_DELTA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederatedConfig {
    pub num_clients: usize,
    pub client_fraction: f64,
    pub rounds: usize,
    pub local_epochs: usize,
    pub local_lot_size: usize,
    pub learning_rate: f64,
    pub dp: Option<LocalDp>,
    pub weighting: Weighting,
    pub sampling_seed: u64,
    /// Seeds local lot shuffles and DP noise.
    pub train_seed: u64,
    /// Evaluate the global model after every round.
    pub eval_every_round: bool,
}

impl Default for FederatedConfig {
    fn default() -> Self {
        FederatedConfig {
            num_clients: 10,
            client_fraction: 0.5,
            rounds: 20,
            local_epochs: 1,
            local_lot_size: 32,
            learning_rate: 0.1,
            dp: None,
            weighting: Weighting::ByExampleCount,
            sampling_seed: 0,
            train_seed: 0,
            eval_every_round: false,
        }
    }
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::invalid("num_clients must be at least 1"));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::invalid("client_fraction must lie in (0, 1]"));
        }
        if self.rounds == 0 || self.local_epochs == 0 || self.local_lot_size == 0 {
            return Err(Error::invalid(
                "rounds, local_epochs and local_lot_size must be at least 1",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if let Some(dp) = &self.dp {
            if !(dp.clip_norm > 0.0 && dp.clip_norm.is_finite()) {
                return Err(Error::invalid("dp.clip_norm must be positive"));
            }
            crate::dp::validate_delta(dp.delta)?;
        }
        Ok(())
    }

    pub fn clients_per_round(&self) -> usize {
        // Guard against products like 0.3 * 10 = 3.0000000000000004.
        let m = (self.client_fraction * self.num_clients as f64 - 1e-9).ceil() as usize;
        m.clamp(1, self.num_clients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub selected_clients: Vec<usize>,
    pub global_params_hash: u64,
    /// Local steps taken by each selected client, aligned with `selected_clients`.
    pub per_client_steps: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accountant_epsilon_after: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
}

/// Distinct client ids for `round_index`, ascending. Keyed only by
/// `(sampling_seed, round_index)`.
pub fn sample_clients(round_index: usize, config: &FederatedConfig) -> Vec<usize> {
    let m = config.clients_per_round();
    let mut rng = rng::stream(config.sampling_seed, round_index as u64);
    let mut ids = index::sample(&mut rng, config.num_clients, m).into_vec();
    ids.sort_unstable();
    ids
}

#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub client_id: usize,
    pub params: ParamVector,
    pub examples_used: usize,
    pub steps_taken: u64,
    pub sample_rate: f64,
    pub max_post_clip_norm: Option<f64>,
}

/// Local training on one client: `local_epochs` passes of lots of
/// `min(local_lot_size, |partition|)`, plain SGD or DP-SGD.
pub fn local_train(
    global: &ParamVector,
    partition: &ClientPartition,
    train: &[LabeledExample],
    config: &FederatedConfig,
    model: &ModelConfig,
    round_index: usize,
) -> Result<LocalUpdate> {
    if partition.is_empty() {
        return Err(Error::invalid(format!(
            "client {} has an empty partition",
            partition.client_id
        )));
    }
    let examples: Vec<&LabeledExample> = partition
        .example_indices
        .iter()
        .map(|&i| {
            train
                .get(i)
                .ok_or_else(|| Error::invalid(format!("partition index {i} outside train set of {}", train.len())))
        })
        .collect::<Result<_>>()?;
    let n = examples.len();
    let lot = config.local_lot_size.min(n);
    let sample_rate = lot as f64 / n as f64;
    let rule = match &config.dp {
        None => StepRule::Sgd {
            learning_rate: config.learning_rate,
        },
        Some(dp) => {
            let sigma = dp
                .noise_multiplier
                .ok_or_else(|| Error::invalid("DP enabled but no noise multiplier set"))?;
            StepRule::DpSgd(DpSgdParams {
                clip_norm: dp.clip_norm,
                noise_multiplier: sigma,
                sample_rate,
                learning_rate: config.learning_rate,
                lot_size: lot,
            })
        }
    };
    let seed = derive_seed(config.train_seed, &[round_index as u64, partition.client_id as u64]);
    let out = train_epochs(global.clone(), &examples, model, config.local_epochs, lot, rule, seed)?;
    Ok(LocalUpdate {
        client_id: partition.client_id,
        params: out.params,
        examples_used: n,
        steps_taken: out.steps,
        sample_rate,
        max_post_clip_norm: out.max_post_clip_norm,
    })
}

#[derive(Debug, Clone)]
pub struct ClientUpdate<'a> {
    pub client_id: usize,
    pub params: &'a ParamVector,
    pub examples_used: usize,
}

/// Weighted parameter average.
///
/// Evaluated as `theta_0 + sum_i w_i (theta_i - theta_0)` over updates in
/// client-id order, with `theta_0` the lowest id's parameters. This equals
/// `sum_i w_i theta_i` and returns `theta` bit-exactly when every client
/// sends the same `theta`.
pub fn aggregate(updates: &[ClientUpdate<'_>], weighting: Weighting) -> Result<ParamVector> {
    if updates.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let mut sorted: Vec<&ClientUpdate<'_>> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let len = sorted[0].params.len();
    if let Some(bad) = sorted.iter().find(|u| u.params.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: bad.params.len(),
        });
    }
    let weights: Vec<f64> = match weighting {
        Weighting::Uniform => vec![1.0 / sorted.len() as f64; sorted.len()],
        Weighting::ByExampleCount => {
            let total: usize = sorted.iter().map(|u| u.examples_used).sum();
            if total == 0 {
                return Err(Error::invalid("total aggregation weight is zero"));
            }
            sorted.iter().map(|u| u.examples_used as f64 / total as f64).collect()
        }
    };
    let anchor = sorted[0].params.as_slice();
    let mut out = anchor.to_vec();
    if sorted.len() > 1 {
        for (u, &w) in sorted.iter().zip(&weights) {
            for ((o, &p), &a) in out.iter_mut().zip(u.params.as_slice()).zip(anchor) {
                *o += w * (p - a);
            }
        }
    }
    Ok(ParamVector(out))
}

#[derive(Debug, Clone)]
pub struct FederatedOutcome {
    pub params: ParamVector,
    pub rounds: Vec<RoundRecord>,
    pub final_accuracy: f64,
    pub final_epsilon: Option<f64>,
    pub max_post_clip_norm: Option<f64>,
}

pub fn run_federated(
    train: &[LabeledExample],
    partitions: &[ClientPartition],
    config: &FederatedConfig,
    model: &ModelConfig,
    eval_set: &[LabeledExample],
) -> Result<FederatedOutcome> {
    config.validate()?;
    if partitions.len() != config.num_clients {
        return Err(Error::invalid(format!(
            "{} partitions for {} clients",
            partitions.len(),
            config.num_clients
        )));
    }
    if let Some(p) = partitions.iter().enumerate().find(|(i, p)| p.client_id != *i) {
        return Err(Error::invalid(format!(
            "partition {} carries client id {}",
            p.0, p.1.client_id
        )));
    }
    let mut global = init_params(model)?;
    let mut accountants: Vec<AccountantState> = vec![AccountantState::new(); config.num_clients];
    let mut records = Vec::with_capacity(config.rounds);
    let mut max_norm: Option<f64> = None;

    for round in 0..config.rounds {
        let selected = sample_clients(round, config);
        let updates: Vec<LocalUpdate> = selected
            .par_iter()
            .map(|&c| local_train(&global, &partitions[c], train, config, model, round))
            .collect::<Result<_>>()?;
        let views: Vec<ClientUpdate<'_>> = updates
            .iter()
            .map(|u| ClientUpdate {
                client_id: u.client_id,
                params: &u.params,
                examples_used: u.examples_used,
            })
            .collect();
        global = aggregate(&views, config.weighting)?;
        if !global.is_finite() {
            return Err(Error::NonFinite(format!("global parameters after round {round}")));
        }

        let mut eps_after = None;
        if let Some(dp) = &config.dp {
            let sigma = dp.noise_multiplier.expect("checked in local_train");
            for u in &updates {
                accountants[u.client_id].compose_in_place(u.sample_rate, sigma, u.steps_taken)?;
                if let Some(m) = u.max_post_clip_norm {
                    max_norm = Some(max_norm.map_or(m, |x: f64| x.max(m)));
                }
            }
            eps_after = Some(worst_epsilon(&accountants, dp.delta)?);
        }
        let eval_accuracy = if config.eval_every_round {
            Some(evaluate(&global, eval_set, model)?)
        } else {
            None
        };
        records.push(RoundRecord {
            round_index: round,
            selected_clients: selected,
            global_params_hash: global.digest(),
            per_client_steps: updates.iter().map(|u| u.steps_taken).collect(),
            accountant_epsilon_after: eps_after,
            eval_accuracy,
        });
    }

    let final_accuracy = evaluate(&global, eval_set, model)?;
    let final_epsilon = records.last().and_then(|r| r.accountant_epsilon_after);
    Ok(FederatedOutcome {
        params: global,
        rounds: records,
        final_accuracy,
        final_epsilon,
        max_post_clip_norm: max_norm,
    })
}

/// Largest epsilon over clients that have taken at least one step.
fn worst_epsilon(accountants: &[AccountantState], delta: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for a in accountants.iter().filter(|a| a.steps_recorded() > 0) {
        worst = worst.max(a.to_epsilon(delta)?.epsilon);
    }
    Ok(worst)
}

/// Upper bound on the local steps client `partition` can take if it were
/// selected in every round, with its local sample rate.
pub fn worst_case_client_schedule(partition: &ClientPartition, config: &FederatedConfig) -> (f64, u64) {
    let n = partition.len().max(1);
    let lot = config.local_lot_size.min(n);
    let per_round = (config.local_epochs * lots_per_epoch(n, lot)) as u64;
    (lot as f64 / n as f64, per_round * config.rounds as u64)
}

pub fn write_round_trace<W: Write>(mut w: W, records: &[RoundRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("round trace", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_of_ten_clients() {
        let cfg = FederatedConfig::default();
        let ids = sample_clients(0, &cfg);
        assert_eq!(ids.len(), 5);
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert!(ids.iter().all(|&i| i < 10));
    }

    #[test]
    fn full_fraction_selects_everyone() {
        let cfg = FederatedConfig {
            client_fraction: 1.0,
            ..Default::default()
        };
        assert_eq!(sample_clients(3, &cfg), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn ceil_guard() {
        let cfg = FederatedConfig {
            client_fraction: 0.3,
            ..Default::default()
        };
        assert_eq!(cfg.clients_per_round(), 3);
        let cfg = FederatedConfig {
            client_fraction: 0.01,
            ..Default::default()
        };
        assert_eq!(cfg.clients_per_round(), 1);
    }

    #[test]
    fn sampling_is_keyed_by_seed_and_round() {
        let cfg = FederatedConfig::default();
        assert_eq!(sample_clients(7, &cfg), sample_clients(7, &cfg));
        let first = sample_clients(0, &cfg);
        assert!((1..100).any(|r| sample_clients(r, &cfg) != first));
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector(v.to_vec())
    }

    #[test]
    fn aggregation_oracles() {
        let (a, b) = (pv(&[1.0, 2.0]), pv(&[3.0, 4.0]));
        let ups = [
            ClientUpdate {
                client_id: 0,
                params: &a,
                examples_used: 5,
            },
            ClientUpdate {
                client_id: 1,
                params: &b,
                examples_used: 5,
            },
        ];
        assert_eq!(aggregate(&ups, Weighting::ByExampleCount).unwrap().0, vec![2.0, 3.0]);
        assert_eq!(aggregate(&ups, Weighting::Uniform).unwrap().0, vec![2.0, 3.0]);

        let (z, f) = (pv(&[0.0]), pv(&[4.0]));
        let ups = [
            ClientUpdate {
                client_id: 0,
                params: &z,
                examples_used: 1,
            },
            ClientUpdate {
                client_id: 1,
                params: &f,
                examples_used: 3,
            },
        ];
        assert_eq!(aggregate(&ups, Weighting::ByExampleCount).unwrap().0, vec![3.0]);
    }

    #[test]
    fn single_client_is_identity() {
        let a = pv(&[0.1, -0.0, 7.25]);
        let out = aggregate(
            &[ClientUpdate {
                client_id: 4,
                params: &a,
                examples_used: 9,
            }],
            Weighting::ByExampleCount,
        )
        .unwrap();
        assert!(out.bit_eq(&a));
    }

    #[test]
    fn aggregation_errors() {
        let (a, b) = (pv(&[1.0]), pv(&[1.0, 2.0]));
        let ups = [
            ClientUpdate {
                client_id: 0,
                params: &a,
                examples_used: 1,
            },
            ClientUpdate {
                client_id: 1,
                params: &b,
                examples_used: 1,
            },
        ];
        assert!(aggregate(&ups, Weighting::Uniform).is_err());
        let ups = [ClientUpdate {
            client_id: 0,
            params: &a,
            examples_used: 0,
        }];
        assert!(aggregate(&ups, Weighting::ByExampleCount).is_err());
        assert!(aggregate(&[], Weighting::Uniform).is_err());
    }
}
