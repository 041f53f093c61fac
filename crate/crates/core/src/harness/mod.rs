//! Experiment grid runner.
//!
//! A grid is every `(setup, epsilon, run_index)` triple of a config. Each
//! triple gets its own child seed, computed from the master seed, the setup
//! tag, the epsilon bits and the run index, and everything random inside the
//! run (model init, lot order, noise, client sampling, partitions) is derived
//! from that child seed. Runs can therefore execute in any order and on any
//! number of threads; results are merged by key.

pub mod config;
pub mod output;
pub mod summary;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{CorpusSource, ExperimentConfig, PartitionConfig, Setup, DEFAULT_EPSILONS};
pub use output::{read_runs, write_outputs, RUNS_FILE, SUMMARY_FILE, TIMINGS_FILE};
pub use summary::{format_cell, mean_std, render_table, summarize, summary_csv, trend_check, CellSummary, TrendReport};

use crate::corpus::{
    featurize, load_corpus, partition_iid, partition_noniid_shards, train_test_split, ClientPartition, LabeledExample,
    SplitSpec,
};
use crate::dp::{calibrate_sigma, DpSgdParams, PrivacyBudget};
use crate::error::{Error, Result};
use crate::federated::{run_federated, worst_case_client_schedule, LocalDp, RoundRecord};
use crate::hash::{derive_seed, Fnv1a};
use crate::models::{evaluate, ModelConfig};
use crate::synth;
use crate::train::{lots_per_epoch, train_centralized, StepRule};

/// Environment variable capping worker threads (0 or unset: one per core).
pub const THREADS_ENV: &str = "PRIVTEXT_THREADS";

const KEY_INIT: u64 = 1;
const KEY_TRAIN: u64 = 2;
const KEY_PARTITION: u64 = 3;
const KEY_SAMPLING: u64 = 4;
const KEY_SPLIT: u64 = 5;

/// Child seed of one run: FNV-1a over the master seed (little endian), the
/// setup tag, a zero byte, a presence byte plus the epsilon bits, and the
/// run index.
pub fn run_seed(master_seed: u64, setup: Setup, epsilon: Option<f64>, run_index: usize) -> u64 {
    let mut h = Fnv1a::with_seed(master_seed);
    h.write(setup.tag().as_bytes()).write(&[0]);
    match epsilon {
        Some(e) => h.write(&[1]).write_u64(e.to_bits()),
        None => h.write(&[0]),
    };
    h.write_u64(run_index as u64).finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub setup: Setup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    pub run_index: usize,
    pub seed: u64,
    /// Test accuracy as a fraction; absent when the run failed.
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achieved_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_digest: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl RunResult {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    pub fn key(&self) -> String {
        run_key(self.setup, self.epsilon, self.run_index)
    }
}

fn run_key(setup: Setup, epsilon: Option<f64>, run_index: usize) -> String {
    match epsilon {
        Some(e) => format!("{}_eps{}_run{}", setup.tag(), e, run_index),
        None => format!("{}_run{}", setup.tag(), run_index),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunTiming {
    pub setup: Setup,
    pub epsilon: Option<f64>,
    pub run_index: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
}

impl RunOptions {
    /// Reads the thread cap from `PRIVTEXT_THREADS`.
    pub fn from_env() -> Result<Self> {
        let threads = match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
            _ => 0,
        };
        Ok(RunOptions { threads })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Sorted by setup, epsilon, run index.
    pub runs: Vec<RunResult>,
    pub summaries: Vec<CellSummary>,
    pub timings: Vec<RunTiming>,
    /// Per-run round traces of federated runs, keyed by run key.
    pub traces: BTreeMap<String, Vec<RoundRecord>>,
    /// Broken run-time contracts (epsilon overshoot, nondeterminism).
    pub invariant_failures: Vec<String>,
    pub dropped_examples: usize,
}

impl ExperimentReport {
    pub fn ok(&self) -> bool {
        self.invariant_failures.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    setup: Setup,
    epsilon: Option<f64>,
    run_index: usize,
}

fn jobs(config: &ExperimentConfig) -> Vec<Job> {
    let mut setups = config.setups.clone();
    setups.sort_unstable();
    let mut eps = config.epsilons.clone();
    eps.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for setup in setups {
        let cells: Vec<Option<f64>> = if setup.is_private() {
            eps.iter().copied().map(Some).collect()
        } else {
            vec![None]
        };
        for epsilon in cells {
            for run_index in 0..config.repeats {
                out.push(Job {
                    setup,
                    epsilon,
                    run_index,
                });
            }
        }
    }
    out
}

/// Loads (or generates) and featurizes the configured corpus.
pub fn load_examples(config: &ExperimentConfig) -> Result<(Vec<LabeledExample>, usize)> {
    let raw = match (&config.corpus.path, &config.corpus.synthetic) {
        (Some(path), None) => load_corpus(path, config.corpus.format, config.corpus.encoding)?,
        (None, Some(s)) => synth::generate(s)?,
        _ => {
            return Err(Error::Config(
                "corpus: exactly one of path or synthetic is required".into(),
            ))
        }
    };
    let f = featurize(&raw, &config.model.featurize_config())?;
    if f.dropped > 0 {
        log::warn!("{} examples had no tokens and were dropped", f.dropped);
    }
    Ok((f.examples, f.dropped))
}

struct Data {
    examples: Vec<LabeledExample>,
    fixed_split: Option<(Vec<LabeledExample>, Vec<LabeledExample>)>,
}

struct JobOutput {
    result: RunResult,
    trace: Option<Vec<RoundRecord>>,
    wall_clock_s: f64,
}

struct Trained {
    accuracy: f64,
    achieved_epsilon: Option<f64>,
    noise_multiplier: Option<f64>,
    params_digest: u64,
    trace: Option<Vec<RoundRecord>>,
}

/// Runs the whole grid and summarizes it. Individual run failures are
/// recorded in the results; only corpus and split problems abort.
pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let (examples, dropped) = load_examples(config)?;
    let fixed_split = if config.resplit_per_run {
        // Fail early on corpora that cannot be split at all.
        train_test_split(&examples, &config.split)?;
        None
    } else {
        Some(train_test_split(&examples, &config.split)?)
    };
    let data = Data { examples, fixed_split };
    let jobs = jobs(config);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<JobOutput> = pool.install(|| jobs.par_iter().map(|j| execute(config, &data, *j)).collect());

    let mut invariant_failures = Vec::new();
    for o in &outputs {
        let r = &o.result;
        if let (Some(target), Some(achieved)) = (r.epsilon, r.achieved_epsilon) {
            if achieved > target {
                invariant_failures.push(format!(
                    "{}: achieved epsilon {achieved} exceeds target {target}",
                    r.key()
                ));
            }
        }
    }
    if config.determinism_check {
        if let Some(first) = jobs.first() {
            let again = pool.install(|| execute(config, &data, *first));
            if again.result != outputs[0].result {
                invariant_failures.push(format!(
                    "{}: re-execution produced a different result ({:?} vs {:?})",
                    outputs[0].result.key(),
                    outputs[0].result,
                    again.result
                ));
            }
        }
    }

    let mut runs = Vec::with_capacity(outputs.len());
    let mut timings = Vec::with_capacity(outputs.len());
    let mut traces = BTreeMap::new();
    for o in outputs {
        timings.push(RunTiming {
            setup: o.result.setup,
            epsilon: o.result.epsilon,
            run_index: o.result.run_index,
            wall_clock_s: o.wall_clock_s,
        });
        if let Some(t) = o.trace {
            traces.insert(o.result.key(), t);
        }
        runs.push(o.result);
    }
    let summaries = summarize(&runs);
    Ok(ExperimentReport {
        runs,
        summaries,
        timings,
        traces,
        invariant_failures,
        dropped_examples: dropped,
    })
}

fn execute(config: &ExperimentConfig, data: &Data, job: Job) -> JobOutput {
    let start = Instant::now();
    let seed = run_seed(config.master_seed, job.setup, job.epsilon, job.run_index);
    let outcome = train_one(config, data, job, seed);
    let wall_clock_s = start.elapsed().as_secs_f64();
    let mut result = RunResult {
        setup: job.setup,
        epsilon: job.epsilon,
        run_index: job.run_index,
        seed,
        accuracy: None,
        achieved_epsilon: None,
        noise_multiplier: None,
        params_digest: None,
        failure: None,
    };
    let trace = match outcome {
        Ok(t) => {
            result.accuracy = Some(t.accuracy);
            result.achieved_epsilon = t.achieved_epsilon;
            result.noise_multiplier = t.noise_multiplier;
            result.params_digest = Some(t.params_digest);
            t.trace
        }
        Err(e) => {
            log::warn!("run {} failed: {e}", run_key(job.setup, job.epsilon, job.run_index));
            result.failure = Some(e.to_string());
            None
        }
    };
    JobOutput {
        result,
        trace,
        wall_clock_s,
    }
}

fn train_one(config: &ExperimentConfig, data: &Data, job: Job, seed: u64) -> Result<Trained> {
    let resplit;
    let (train, test) = match &data.fixed_split {
        Some((a, b)) => (a, b),
        None => {
            let spec = SplitSpec {
                seed: derive_seed(seed, &[KEY_SPLIT, config.split.seed]),
                ..config.split
            };
            resplit = train_test_split(&data.examples, &spec)?;
            (&resplit.0, &resplit.1)
        }
    };
    let model = ModelConfig {
        init_seed: derive_seed(seed, &[KEY_INIT, config.model.init_seed]),
        ..config.model
    };
    if job.setup.is_federated() {
        train_federated(config, train, test, &model, job, seed)
    } else {
        train_central(config, train, test, &model, job, seed)
    }
}

fn budget(config: &ExperimentConfig, job: Job) -> Result<PrivacyBudget> {
    let eps = job
        .epsilon
        .ok_or_else(|| Error::invalid(format!("{} needs an epsilon", job.setup)))?;
    PrivacyBudget::new(eps, config.delta)
}

fn train_central(
    config: &ExperimentConfig,
    train: &[LabeledExample],
    test: &[LabeledExample],
    model: &ModelConfig,
    job: Job,
    seed: u64,
) -> Result<Trained> {
    let c = &config.centralized;
    let learning_rate = c.learning_rate_for(model.kind);
    let train_seed = derive_seed(seed, &[KEY_TRAIN]);
    let (rule, calibration) = if job.setup.is_private() {
        let lot = c.lot_size.min(train.len().max(1));
        let q = lot as f64 / train.len().max(1) as f64;
        let steps = (c.epochs * lots_per_epoch(train.len(), lot)) as u64;
        let cal = calibrate_sigma(&budget(config, job)?, q, steps)?;
        let rule = StepRule::DpSgd(DpSgdParams {
            clip_norm: c.clip_norm,
            noise_multiplier: cal.sigma,
            sample_rate: q,
            learning_rate,
            lot_size: lot,
        });
        (rule, Some(cal))
    } else {
        (StepRule::Sgd { learning_rate }, None)
    };
    let out = train_centralized(train, model, c, rule, train_seed)?;
    Ok(Trained {
        accuracy: evaluate(&out.params, test, model)?,
        achieved_epsilon: calibration.map(|c| c.epsilon),
        noise_multiplier: calibration.map(|c| c.sigma),
        params_digest: out.params.digest(),
        trace: None,
    })
}

fn partitions_for(
    config: &ExperimentConfig,
    train: &[LabeledExample],
    job: Job,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    let labels: Vec<_> = train.iter().map(|e| e.label).collect();
    let pseed = derive_seed(seed, &[KEY_PARTITION, config.partition.seed]);
    let n = config.federated.num_clients;
    if job.setup.is_noniid() {
        partition_noniid_shards(
            &labels,
            config.partition.shard_size,
            config.partition.shards_per_client,
            n,
            pseed,
        )
    } else {
        partition_iid(&labels, n, pseed)
    }
}

/// Noise multiplier that keeps every client within budget even if it were
/// selected in every round: the largest per-client calibrated sigma.
fn federated_sigma(
    partitions: &[ClientPartition],
    fed: &crate::federated::FederatedConfig,
    target: &PrivacyBudget,
) -> Result<f64> {
    let mut cache: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    let mut sigma = 0.0f64;
    for p in partitions.iter().filter(|p| !p.is_empty()) {
        let (q, steps) = worst_case_client_schedule(p, fed);
        let key = (q.to_bits(), steps);
        let s = match cache.get(&key) {
            Some(&s) => s,
            None => {
                let s = calibrate_sigma(target, q, steps)?.sigma;
                cache.insert(key, s);
                s
            }
        };
        sigma = sigma.max(s);
    }
    if sigma == 0.0 {
        return Err(Error::invalid("no client holds any data"));
    }
    Ok(sigma)
}

fn train_federated(
    config: &ExperimentConfig,
    train: &[LabeledExample],
    test: &[LabeledExample],
    model: &ModelConfig,
    job: Job,
    seed: u64,
) -> Result<Trained> {
    let partitions = partitions_for(config, train, job, seed)?;
    let mut fed = config.federated;
    fed.sampling_seed = derive_seed(seed, &[KEY_SAMPLING, config.federated.sampling_seed]);
    fed.train_seed = derive_seed(seed, &[KEY_TRAIN, config.federated.train_seed]);
    fed.dp = None;
    if job.setup.is_private() {
        let target = budget(config, job)?;
        let sigma = federated_sigma(&partitions, &fed, &target)?;
        let base = config.federated.dp.unwrap_or_default();
        fed.dp = Some(LocalDp {
            clip_norm: base.clip_norm,
            noise_multiplier: Some(sigma),
            delta: config.delta,
        });
    }
    let out = run_federated(train, &partitions, &fed, model, test)?;
    Ok(Trained {
        accuracy: out.final_accuracy,
        achieved_epsilon: out.final_epsilon,
        noise_multiplier: fed.dp.and_then(|d| d.noise_multiplier),
        params_digest: out.params.digest(),
        trace: config.round_traces.then_some(out.rounds),
    })
}
