//! Learner oracles: weighted averaging, gradient checks, divergence scores and data schemes.

#![allow(clippy::needless_range_loop)]

use hflsim_core::learner::{
    fedavg, kld_score, local_sgd, synth_noniid, ClusterSpec, Dataset, ModelParams, ModelShape, Scheme, TrainConfig,
};
use hflsim_core::rng::StreamKey;
use proptest::prelude::*;

fn shape(hidden: Option<usize>) -> ModelShape {
    ModelShape { input_dim: 2, hidden, classes: 4 }
}

fn data(n: usize, seed: u64) -> Dataset {
    ClusterSpec { classes: 4, radius: 2.0, std: 0.7 }.balanced(n, StreamKey::new(seed, "data"))
}

fn random_model(shape: ModelShape, seed: u64, scale: f64) -> ModelParams {
    let mut m = ModelParams::init(shape, StreamKey::new(seed, "init"));
    let mut rng = StreamKey::new(seed, "perturb").rng();
    for p in &mut m.params {
        *p += scale * (rand::Rng::random::<f64>(&mut rng) - 0.5);
    }
    m
}

#[test]
fn fedavg_matches_hand_computed_means() {
    let s = ModelShape { input_dim: 1, hidden: None, classes: 2 };
    let mk = |p: [f64; 4]| ModelParams { params: p.to_vec(), ..ModelParams::zeros(s) };
    let a = mk([1.0, 2.0, 3.0, 4.0]);
    let b = mk([5.0, -2.0, 0.5, 8.0]);
    let c = mk([0.0, 0.0, 9.0, -1.0]);
    let avg = fedavg(&[&a, &b, &c], &[1.0, 3.0, 4.0]).unwrap();
    let expect =
        [(1.0 + 15.0 + 0.0) / 8.0, (2.0 - 6.0 + 0.0) / 8.0, (3.0 + 1.5 + 36.0) / 8.0, (4.0 + 24.0 - 4.0) / 8.0];
    for (x, y) in avg.params.iter().zip(expect) {
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
    let single = fedavg(&[&b], &[7.0]).unwrap();
    assert_eq!(single.params, b.params);
}

#[test]
fn fedavg_rejects_bad_inputs() {
    let m = ModelParams::zeros(shape(None));
    assert!(fedavg(&[], &[]).is_err());
    assert!(fedavg(&[&m], &[0.0]).is_err());
    assert!(fedavg(&[&m, &m], &[1.0]).is_err());
    let other = ModelParams::zeros(shape(Some(3)));
    assert!(fedavg(&[&m, &other], &[1.0, 1.0]).is_err());
}

fn finite_difference_check(hidden: Option<usize>, seed: u64) {
    let m = random_model(shape(hidden), seed, 1.0);
    let d = data(40, seed);
    let idx: Vec<usize> = (0..d.len()).step_by(3).collect();
    let mut grad = vec![0.0; m.params.len()];
    m.loss_and_grad(&d, &idx, &mut grad);
    let h = 1e-6;
    for i in 0..m.params.len() {
        let mut plus = m.clone();
        plus.params[i] += h;
        let mut minus = m.clone();
        minus.params[i] -= h;
        let fd = (plus.loss(&d, &idx) - minus.loss(&d, &idx)) / (2.0 * h);
        assert!((fd - grad[i]).abs() <= 1e-5, "param {i}: analytic {} vs numeric {fd}", grad[i]);
    }
}

#[test]
fn gradients_match_central_differences() {
    for seed in 0..5 {
        finite_difference_check(None, seed);
        finite_difference_check(Some(6), seed);
    }
}

#[test]
fn sgd_is_deterministic_and_lowers_loss() {
    let m = ModelParams::zeros(shape(None));
    let d = data(80, 4);
    let cfg = TrainConfig { eta: 0.5, h: 30, batch_fraction: 0.25, seed: 11 };
    let a = local_sgd(&m, &d, &cfg).unwrap();
    assert_eq!(a, local_sgd(&m, &d, &cfg).unwrap());
    let all: Vec<usize> = (0..d.len()).collect();
    assert!(a.loss(&d, &all) < m.loss(&d, &all));
    assert_eq!(a.version.h, 30);
    let still = local_sgd(&m, &d, &TrainConfig { eta: 1e-300, ..cfg }).unwrap();
    assert!(still.params.iter().all(|p| p.abs() < 1e-290));
}

#[test]
fn kld_is_zero_for_identical_models_and_positive_otherwise() {
    let probe = data(20, 9);
    let a = random_model(shape(Some(5)), 1, 1.0);
    assert_eq!(kld_score(&a, &a, &probe).unwrap(), 0.0);
    let b = random_model(shape(Some(5)), 2, 1.0);
    assert!(kld_score(&a, &b, &probe).unwrap() > 0.0);
    let mut shifted = a.clone();
    let n = shifted.params.len();
    for c in 0..4 {
        shifted.params[n - 4 + c] += 3.0;
    }
    assert!(kld_score(&a, &shifted, &probe).unwrap().abs() < 1e-12);
}

#[test]
fn scheme_a_devices_hold_two_labels() {
    let spec = ClusterSpec::default();
    let sets = synth_noniid(30, Scheme::A, 64, &spec, StreamKey::new(5, "data")).unwrap();
    for d in &sets {
        assert_eq!(d.label_set().len(), 2);
        assert_eq!(d.len(), 64);
    }
    let b = synth_noniid(30, Scheme::B, 64, &spec, StreamKey::new(5, "data")).unwrap();
    assert!(b.iter().all(|d| (2..=10).contains(&d.label_set().len())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fedavg_ignores_order_and_weight_scale(
        params in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 12), 1..6),
        weights in prop::collection::vec(0.1..10.0f64, 6),
        scale in 0.01..100.0f64,
        rot in 0usize..6,
    ) {
        let s = shape(None);
        let models: Vec<ModelParams> = params.iter().map(|p| ModelParams { params: p.clone(), ..ModelParams::zeros(s) }).collect();
        let w = &weights[..models.len()];
        let refs: Vec<&ModelParams> = models.iter().collect();
        let base = fedavg(&refs, w).unwrap();
        let r = rot % models.len();
        let mut rot_refs = refs.clone();
        rot_refs.rotate_left(r);
        let mut rot_w = w.to_vec();
        rot_w.rotate_left(r);
        let rotated = fedavg(&rot_refs, &rot_w).unwrap();
        let scaled_w: Vec<f64> = w.iter().map(|x| x * scale).collect();
        let scaled = fedavg(&refs, &scaled_w).unwrap();
        for i in 0..base.params.len() {
            prop_assert!((base.params[i] - rotated.params[i]).abs() <= 1e-12);
            prop_assert!((base.params[i] - scaled.params[i]).abs() <= 1e-12);
            let lo = models.iter().map(|m| m.params[i]).fold(f64::INFINITY, f64::min);
            let hi = models.iter().map(|m| m.params[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(base.params[i] >= lo - 1e-12 && base.params[i] <= hi + 1e-12);
        }
        let equal = fedavg(&refs, &vec![1.0; models.len()]).unwrap();
        for i in 0..equal.params.len() {
            let mean = models.iter().map(|m| m.params[i]).sum::<f64>() / models.len() as f64;
            prop_assert!((equal.params[i] - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn kld_is_non_negative(seed_a in 0u64..1000, seed_b in 0u64..1000, scale in 0.0..4.0f64) {
        let probe = data(10, seed_a ^ seed_b);
        let a = random_model(shape(None), seed_a, scale);
        let b = random_model(shape(None), seed_b, scale);
        let k = kld_score(&a, &b, &probe).unwrap();
        prop_assert!(k >= 0.0 && k.is_finite());
        if seed_a == seed_b {
            prop_assert_eq!(k, 0.0);
        }
    }
}
