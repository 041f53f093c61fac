use rand_distr::{Distribution, StandardNormal};

use super::clip::clip_grad;
use super::DpSgdParams;
use crate::error::{Error, Result};
use crate::models::{ParamVector, PerExampleGradient};
use crate::rng;

/// Lot members in ascending example-id order, so the reduction order never
/// depends on how the lot was sampled.
fn ordered(lot: &[PerExampleGradient]) -> Vec<&PerExampleGradient> {
    let mut v: Vec<&PerExampleGradient> = lot.iter().collect();
    v.sort_by_key(|g| g.example_id);
    v
}

fn check_lot(params: &ParamVector, lot: &[PerExampleGradient]) -> Result<()> {
    if lot.is_empty() {
        return Err(Error::invalid("empty lot"));
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters".into()));
    }
    if let Some(g) = lot.iter().find(|g| g.grad.len() != params.len()) {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: g.grad.len(),
        });
    }
    Ok(())
}

/// Plain minibatch SGD: `theta - lr * mean(g)`.
pub fn sgd_step(params: &ParamVector, lot: &[PerExampleGradient], learning_rate: f64) -> Result<ParamVector> {
    check_lot(params, lot)?;
    let mut acc = vec![0.0; params.len()];
    for g in ordered(lot) {
        g.grad.add_to(&mut acc)?;
    }
    let l = lot.len() as f64;
    let mut out = params.clone();
    for (p, a) in out.as_mut_slice().iter_mut().zip(&acc) {
        *p -= learning_rate * (a / l);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("parameters after SGD step".into()));
    }
    Ok(out)
}

/// One DP-SGD update:
/// `theta - lr / L * (sum_i clip(g_i, C) + N(0, sigma^2 C^2 I))` with `L = |lot|`.
///
/// Noise is drawn coordinate by coordinate, in parameter order, from the
/// ChaCha8 stream keyed by `noise_seed`.
pub fn dpsgd_step(
    params: &ParamVector,
    lot: &[PerExampleGradient],
    p: &DpSgdParams,
    noise_seed: u64,
) -> Result<ParamVector> {
    dpsgd_step_audited(params, lot, p, noise_seed).map(|(out, _)| out)
}

/// Like [`dpsgd_step`], additionally returning each lot member's post-clip
/// norm in example-id order.
pub fn dpsgd_step_audited(
    params: &ParamVector,
    lot: &[PerExampleGradient],
    p: &DpSgdParams,
    noise_seed: u64,
) -> Result<(ParamVector, Vec<f64>)> {
    if p.noise_multiplier < 0.0 || !p.noise_multiplier.is_finite() {
        return Err(Error::invalid(format!(
            "noise multiplier must be non-negative, got {}",
            p.noise_multiplier
        )));
    }
    p.validate()?;
    check_lot(params, lot)?;

    let mut acc = vec![0.0; params.len()];
    let mut post_norms = Vec::with_capacity(lot.len());
    for g in ordered(lot) {
        let mut clipped = g.grad.clone();
        clip_grad(&mut clipped, p.clip_norm)?;
        post_norms.push(clipped.norm());
        clipped.add_to(&mut acc)?;
    }
    if p.noise_multiplier > 0.0 {
        let std = p.noise_multiplier * p.clip_norm;
        let mut rng = rng::seeded(noise_seed);
        for a in acc.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *a += std * z;
        }
    }
    let l = lot.len() as f64;
    let mut out = params.clone();
    for (p_i, a) in out.as_mut_slice().iter_mut().zip(&acc) {
        *p_i -= p.learning_rate * (a / l);
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("parameters after DP-SGD step".into()));
    }
    Ok((out, post_norms))
}
