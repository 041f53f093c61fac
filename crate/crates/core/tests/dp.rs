mod common;

use common::{sig_digits_agree, RDP_ORACLE};
use privtext::dp::{
    calibrate_sigma, clip, dpsgd_step, epsilon_for, rdp_subsampled_gaussian, sgd_step, AccountantState, DpSgdParams,
    PrivacyBudget, DEFAULT_ORDERS, SIGMA_FLOOR,
};
use privtext::models::{GradVec, ParamVector, PerExampleGradient};
use proptest::prelude::*;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #[test]
    fn clip_bounds_norm_and_keeps_direction(
        g in prop::collection::vec(-1e3f64..1e3, 1..200),
        c in prop::sample::select(vec![0.1, 1.0, 10.0]),
    ) {
        let out = clip(&g, c).unwrap();
        let n = norm(&out);
        prop_assert!(n <= c + 1e-12);
        let gn = norm(&g);
        if gn > 0.0 {
            let cos = g.iter().zip(&out).map(|(a, b)| a * b).sum::<f64>() / (gn * n);
            prop_assert!((cos - 1.0).abs() < 1e-12);
        }
        if gn <= c {
            prop_assert_eq!(out, g);
        }
    }

    #[test]
    fn epsilon_monotone_in_steps_q_and_sigma(
        q in 0.001f64..0.5,
        sigma in 0.5f64..5.0,
        steps in 1u64..2000,
    ) {
        let e = |q: f64, s: f64, t: u64| epsilon_for(q, s, t, 1e-5).unwrap().epsilon;
        let base = e(q, sigma, steps);
        prop_assert!(e(q, sigma, steps + 100) >= base);
        prop_assert!(e((q * 1.5).min(1.0), sigma, steps) >= base);
        prop_assert!(e(q, sigma * 1.2, steps) <= base);
    }
}

#[test]
fn clip_examples() {
    let out = clip(&[6.0, 8.0], 1.0).unwrap();
    assert!((out[0] - 0.6).abs() < 1e-15 && (out[1] - 0.8).abs() < 1e-15, "{out:?}");
    assert_eq!(clip(&[0.3, 0.4], 1.0).unwrap(), vec![0.3, 0.4]);
    assert_eq!(clip(&[0.0; 4], 1.0).unwrap(), vec![0.0; 4]);
}

#[test]
fn gaussian_closed_form_and_empty_sampling() {
    for alpha in 2..=64 {
        for sigma in [0.5, 1.0, 2.0, 10.0] {
            let exact = alpha as f64 / (2.0 * sigma * sigma);
            let got = rdp_subsampled_gaussian(1.0, sigma, alpha).unwrap();
            assert!(
                (got - exact).abs() <= 1e-12,
                "alpha {alpha} sigma {sigma}: {got} vs {exact}"
            );
            assert_eq!(rdp_subsampled_gaussian(0.0, sigma, alpha).unwrap(), 0.0);
        }
    }
    assert_eq!(rdp_subsampled_gaussian(1.0, 1.0, 2).unwrap(), 1.0);
}

#[test]
fn matches_high_precision_oracle() {
    for &(q, sigma, alpha, want) in &RDP_ORACLE {
        let got = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
        assert!(
            sig_digits_agree(got, want, 8),
            "({q}, {sigma}, {alpha}): {got} vs {want}"
        );
    }
}

#[test]
fn no_overflow_across_the_supported_range() {
    for q in [0.0, 1e-6, 0.01, 0.3, 0.99, 1.0] {
        for sigma in [0.3, 0.7, 3.0, 100.0] {
            for &alpha in &DEFAULT_ORDERS {
                let v = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
                assert!(v.is_finite() && v >= 0.0, "q {q} sigma {sigma} alpha {alpha}: {v}");
            }
        }
    }
}

#[test]
fn single_gaussian_step_epsilon() {
    let want = 3.0 + (1e5f64).ln() / 5.0;
    let r = epsilon_for(1.0, 1.0, 1, 1e-5).unwrap();
    assert!((r.epsilon - want).abs() < 1e-12, "{}", r.epsilon);
    assert_eq!(r.best_order, 6);
    assert!(epsilon_for(1.0, 1.0, 1, 1e-7).unwrap().epsilon > r.epsilon);
    assert!(epsilon_for(1.0, 1.0, 2, 1e-5).unwrap().epsilon > r.epsilon);
}

#[test]
fn composition_is_linear_and_order_free() {
    let fresh = AccountantState::new();
    assert_eq!(fresh.compose(0.05, 1.1, 0).unwrap(), fresh);
    let split = fresh.compose(0.05, 1.1, 120).unwrap().compose(0.05, 1.1, 380).unwrap();
    let once = fresh.compose(0.05, 1.1, 500).unwrap();
    assert_eq!(split.rdp_totals(), once.rdp_totals());

    let ab = fresh.compose(0.01, 2.0, 30).unwrap().compose(0.2, 0.9, 7).unwrap();
    let ba = fresh.compose(0.2, 0.9, 7).unwrap().compose(0.01, 2.0, 30).unwrap();
    assert_eq!(ab.rdp_totals(), ba.rdp_totals());

    let mut prev = 0.0;
    let mut s = fresh;
    for _ in 0..5 {
        s = s.compose(0.02, 1.0, 10).unwrap();
        assert!(s.rdp_totals()[0] > prev);
        prev = s.rdp_totals()[0];
    }
}

#[test]
fn calibration_roundtrip_over_the_sweep() {
    let mut sigmas = Vec::new();
    for eps in [0.5, 5.0, 15.0, 20.0, 25.0] {
        let cal = calibrate_sigma(&PrivacyBudget::new(eps, 1e-5).unwrap(), 0.05, 500).unwrap();
        let achieved = AccountantState::new()
            .compose(0.05, cal.sigma, 500)
            .unwrap()
            .to_epsilon(1e-5)
            .unwrap()
            .epsilon;
        assert!(
            achieved <= eps && achieved >= 0.99 * eps,
            "eps {eps}: achieved {achieved}"
        );
        sigmas.push(cal.sigma);
    }
    assert!(sigmas.windows(2).all(|w| w[0] > w[1]), "{sigmas:?}");
}

#[test]
fn vanishing_sample_rate_reaches_the_floor() {
    for eps in [0.5, 5.0, 25.0] {
        let cal = calibrate_sigma(&PrivacyBudget::new(eps, 1e-5).unwrap(), 1e-6, 500).unwrap();
        assert!(cal.sigma <= 2.0 * SIGMA_FLOOR, "eps {eps}: sigma {}", cal.sigma);
    }
}

fn zero_lot(n: usize, dim: usize) -> Vec<PerExampleGradient> {
    (0..n)
        .map(|i| PerExampleGradient {
            example_id: i,
            grad: GradVec::Sparse {
                len: dim,
                entries: vec![],
            },
            loss: 0.0,
        })
        .collect()
}

#[test]
fn noise_has_the_calibrated_scale() {
    let (dim, lot, steps) = (4, 100, 10_000);
    let p = DpSgdParams {
        clip_norm: 1.0,
        noise_multiplier: 1.0,
        sample_rate: 0.1,
        learning_rate: 1.0,
        lot_size: lot,
    };
    let grads = zero_lot(lot, dim);
    let zero = ParamVector(vec![0.0; dim]);
    let mut samples = vec![Vec::with_capacity(steps); dim];
    for step in 0..steps {
        let out = dpsgd_step(&zero, &grads, &p, 0xD15C0 + step as u64).unwrap();
        for (j, v) in out.0.iter().enumerate() {
            samples[j].push(-v);
        }
    }
    let target = 0.01;
    for s in &samples {
        let mean = s.iter().sum::<f64>() / steps as f64;
        let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (steps - 1) as f64).sqrt();
        assert!(mean.abs() <= 3.0 * target / (steps as f64).sqrt(), "mean {mean}");
        assert!((sd / target - 1.0).abs() < 0.05, "std {sd}");
    }
}

#[test]
fn zero_noise_is_clipped_sgd() {
    let params = ParamVector(vec![0.5, -1.0, 2.0]);
    let lot = vec![
        PerExampleGradient {
            example_id: 1,
            grad: GradVec::Dense(vec![3.0, 0.0, 4.0]),
            loss: 0.0,
        },
        PerExampleGradient {
            example_id: 0,
            grad: GradVec::Dense(vec![0.1, 0.2, -0.2]),
            loss: 0.0,
        },
    ];
    let p = DpSgdParams {
        clip_norm: 1.0,
        noise_multiplier: 0.0,
        sample_rate: 0.5,
        learning_rate: 0.3,
        lot_size: 2,
    };
    let clipped: Vec<PerExampleGradient> = lot
        .iter()
        .map(|g| PerExampleGradient {
            grad: GradVec::Dense(clip(&g.grad.to_dense(), 1.0).unwrap()),
            ..g.clone()
        })
        .collect();
    let dp = dpsgd_step(&params, &lot, &p, 9).unwrap();
    assert_eq!(dp, sgd_step(&params, &clipped, 0.3).unwrap());

    let single = &lot[1..];
    let out = dpsgd_step(&params, single, &p, 9).unwrap();
    let want: Vec<f64> = params
        .0
        .iter()
        .zip([0.1, 0.2, -0.2])
        .map(|(t, g)| t - 0.3 * g)
        .collect();
    assert_eq!(out.0, want);
}
