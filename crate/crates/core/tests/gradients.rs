mod common;

use common::*;
use rand::{seq::IndexedRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

#[test]
fn linear_gradient_matches_finite_differences() {
    let cfg = linear_config(256);
    let examples = synthetic_examples(200, 3, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..5 {
        let ex = examples.choose(&mut rng).unwrap();
        let params = random_params(cfg.param_count(), 0.5, &mut rng);
        let coords = linear_coords(ex, &cfg, &mut rng);
        let err = finite_difference_error(&params, ex, &cfg, &coords, 1e-5);
        assert!(err < TOL, "trial {trial}: relative error {err:e}");
    }
}

#[test]
fn transformer_gradient_matches_finite_differences() {
    let cfg = transformer_config();
    let examples = synthetic_examples(200, 5, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..5 {
        let ex = examples.choose(&mut rng).unwrap();
        let params = random_params(cfg.param_count(), 0.3, &mut rng);
        let coords = transformer_coords(ex, &cfg, &mut rng);
        let err = finite_difference_error(&params, ex, &cfg, &coords, 1e-5);
        assert!(err < TOL, "trial {trial}: relative error {err:e}");
    }
}
