#![allow(dead_code)]

use privtext::corpus::{featurize, LabeledExample, RawExample};
use privtext::models::{forward, per_example_grads, ModelConfig, ModelKind, ParamVector};
use privtext::synth::{self, SynthConfig};
use rand::Rng;

/// `rdp_subsampled_gaussian(q, sigma, alpha)` evaluated with 60-digit
/// arithmetic by `tests/oracles/rdp_oracle.py`.
#[allow(clippy::excessive_precision)]
pub const RDP_ORACLE: [(f64, f64, u32, f64); 21] = [
    (0.01, 1.0, 2, 0.00017181342207454794),
    (0.01, 1.0, 3, 0.00026463757458466136),
    (0.01, 1.0, 8, 0.00089364390760603189),
    (0.01, 1.0, 32, 11.246275937048069),
    (0.05, 1.1, 2, 0.0032078079627005674),
    (0.05, 1.1, 10, 0.81704980567171074),
    (0.05, 1.1, 64, 23.402997412252114),
    (0.001, 0.5, 2, 5.3596713703623594e-5),
    (0.001, 0.5, 5, 1.3665079165052154),
    (0.001, 0.5, 20, 32.728678653703014),
    (0.1, 2.0, 4, 0.0060032829644896488),
    (0.1, 2.0, 16, 0.045291839083621967),
    (0.1, 2.0, 128, 13.679284315722684),
    (0.5, 3.0, 2, 0.028956453084608938),
    (0.5, 3.0, 12, 0.23885772329402198),
    (0.02, 0.8, 6, 0.15263837532820721),
    (0.02, 0.8, 40, 27.237668712381385),
    (0.2, 10.0, 256, 0.10091432489835853),
    (0.2, 10.0, 64, 0.014331998148967166),
    (0.0133, 4.0, 30, 0.00017540487399873804),
    (0.9, 1.5, 7, 1.4417254389315623),
];

/// Agreement to `digits` significant digits.
pub fn sig_digits_agree(a: f64, b: f64, digits: i32) -> bool {
    (a - b).abs() <= 0.5 * 10f64.powi(1 - digits) * b.abs()
}

pub fn linear_config(feature_dim: usize) -> ModelConfig {
    ModelConfig {
        kind: ModelKind::Linear,
        feature_dim,
        ..Default::default()
    }
}

pub fn transformer_config() -> ModelConfig {
    ModelConfig {
        kind: ModelKind::TinyTransformer,
        vocab_hash_dim: 512,
        embed_dim: 8,
        num_heads: 2,
        ff_dim: 16,
        max_len: 24,
        ..Default::default()
    }
}

pub fn synthetic_examples(size: usize, seed: u64, model: &ModelConfig) -> Vec<LabeledExample> {
    let raw = synth::generate(&SynthConfig {
        size,
        seed,
        ..Default::default()
    })
    .unwrap();
    featurize(&raw, &model.featurize_config()).unwrap().examples
}

pub fn featurized(raw: &[RawExample], model: &ModelConfig) -> Vec<LabeledExample> {
    featurize(raw, &model.featurize_config()).unwrap().examples
}

pub fn random_params<R: Rng>(n: usize, scale: f64, rng: &mut R) -> ParamVector {
    ParamVector((0..n).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn loss(params: &ParamVector, ex: &LabeledExample, cfg: &ModelConfig) -> f64 {
    -forward(params, ex, cfg).unwrap()[ex.label.index()].ln()
}

/// Worst coordinate-wise relative error between the analytic gradient and a
/// central difference with step `h`, over `coords`. The denominator is
/// floored at 1e-6 so coordinates whose true derivative is zero are judged
/// by absolute error.
pub fn finite_difference_error(
    params: &ParamVector,
    ex: &LabeledExample,
    cfg: &ModelConfig,
    coords: &[usize],
    h: f64,
) -> f64 {
    let analytic = per_example_grads(params, &[ex], cfg).unwrap().remove(0).grad.to_dense();
    let mut p = params.clone();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = p.0[i];
        p.0[i] = orig + h;
        let up = loss(&p, ex, cfg);
        p.0[i] = orig - h;
        let down = loss(&p, ex, cfg);
        p.0[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// Every coordinate the linear model's loss depends on for `ex`, plus a few
/// it does not.
pub fn linear_coords<R: Rng>(ex: &LabeledExample, cfg: &ModelConfig, rng: &mut R) -> Vec<usize> {
    let f = cfg.feature_dim;
    let mut c: Vec<usize> = (0..3)
        .flat_map(|k| ex.features.iter().map(move |&(i, _)| k * f + i as usize))
        .collect();
    c.extend(3 * f..3 * f + 3);
    c.extend((0..10).map(|_| rng.random_range(0..3 * f)));
    c
}

/// All non-embedding coordinates, the embedding rows of the example's
/// tokens, and a few unrelated embedding coordinates.
pub fn transformer_coords<R: Rng>(ex: &LabeledExample, cfg: &ModelConfig, rng: &mut R) -> Vec<usize> {
    use privtext::models::transformer::Layout;
    let l = Layout::new(cfg.vocab_hash_dim, cfg.embed_dim, cfg.num_heads, cfg.ff_dim);
    let d = cfg.embed_dim;
    let mut c: Vec<usize> = (l.wq..l.total).collect();
    for &t in ex.token_ids.iter().take(cfg.max_len) {
        c.extend(l.embed + t as usize * d..l.embed + (t as usize + 1) * d);
    }
    c.extend((0..10).map(|_| l.embed + rng.random_range(0..cfg.vocab_hash_dim * d)));
    c.sort_unstable();
    c.dedup();
    c
}
