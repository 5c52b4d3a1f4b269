//! Allocation solver oracles: grid comparisons, budget use, determinism and convexity of the objective.

use hflsim_core::p1::*;
use hflsim_core::rng::StreamKey;
use proptest::prelude::*;
use rand::Rng;

fn shares(inst: &P1Instance, s: &P1Solution) {
    let sd: f64 = s.b_d2u.iter().sum();
    let su: f64 = s.b_u2d.iter().sum();
    assert!(sd <= inst.b_d2u_total * (1.0 + 1e-12));
    assert!(su <= inst.b_u2d_total * (1.0 + 1e-12));
    assert!(s.h_star >= 1);
}

#[test]
fn single_device_matches_two_variable_grid() {
    for seed in 0..20 {
        let inst = random_instance(1, StreamKey::new(seed, "one"));
        let sol = solve(&inst, &AlmConfig::default()).unwrap();
        let mut best = f64::INFINITY;
        for h in 1..=20 {
            for kd in 1..=200 {
                for ku in [kd, 200] {
                    let v = objective(
                        &inst,
                        h as f64,
                        &[kd as f64 / 200.0 * inst.b_d2u_total],
                        &[ku as f64 / 200.0 * inst.b_u2d_total],
                    );
                    best = best.min(v);
                }
            }
        }
        assert!((sol.objective_value - best) / best <= 0.02, "seed {seed}");
        shares(&inst, &sol);
    }
}

#[test]
fn symmetric_devices_split_evenly() {
    let inst = random_instance(1, StreamKey::new(3, "sym"));
    let twin = P1Instance { devices: vec![inst.devices[0]; 2], ..inst };
    let sol = solve(&twin, &AlmConfig::default()).unwrap();
    assert!((sol.b_d2u[0] - sol.b_d2u[1]).abs() <= 1e-6 * twin.b_d2u_total);
    assert!((sol.b_u2d[0] - sol.b_u2d[1]).abs() <= 1e-6 * twin.b_u2d_total);
}

#[test]
fn beats_uniform_split_baseline() {
    for seed in 0..100 {
        let n = 1 + (seed % 6) as usize;
        let inst = random_instance(n, StreamKey::new(seed, "base"));
        let sol = solve(&inst, &AlmConfig::default()).unwrap();
        let bd = vec![inst.b_d2u_total / n as f64; n];
        let bu = vec![inst.b_u2d_total / n as f64; n];
        let base = objective(&inst, 5.0, &bd, &bu);
        assert!(sol.objective_value <= base, "seed {seed}");
        shares(&inst, &sol);
    }
}

#[test]
fn solver_is_deterministic() {
    let inst = random_instance(3, StreamKey::new(11, "det"));
    let a = solve(&inst, &AlmConfig::default()).unwrap();
    let b = solve(&inst, &AlmConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn oracle_is_exhaustive_and_nested() {
    for seed in 0..10 {
        let inst = random_instance(2, StreamKey::new(seed, "orc"));
        let coarse = brute_force_oracle(&inst, (1, 20), 20);
        let fine = brute_force_oracle(&inst, (1, 20), 40);
        assert!(fine.objective_value <= coarse.objective_value);
        let mut rng = StreamKey::new(seed, "samples").rng();
        for _ in 0..200 {
            let k = rng.random_range(1..20u32);
            let j = rng.random_range(1..20u32);
            let h = rng.random_range(1..=20u32) as f64;
            let v = objective(
                &inst,
                h,
                &[k as f64 / 20.0 * inst.b_d2u_total, (20 - k) as f64 / 20.0 * inst.b_d2u_total],
                &[j as f64 / 20.0 * inst.b_u2d_total, (20 - j) as f64 / 20.0 * inst.b_u2d_total],
            );
            assert!(coarse.objective_value <= 1.001 * v);
        }
    }
}

#[test]
fn solver_close_to_oracle_on_small_instances() {
    let mut within = 0;
    for seed in 0..100 {
        let n = 1 + (seed % 3) as usize;
        let inst = random_instance(n, StreamKey::new(seed, "acc"));
        let sol = solve(&inst, &AlmConfig::default()).unwrap();
        let orc = brute_force_oracle(&inst, (1, 20), 60);
        if (sol.objective_value - orc.objective_value) / orc.objective_value <= 0.02 {
            within += 1;
        }
    }
    assert!(within >= 95, "{within} of 100 within 2%");
}

#[test]
fn rejects_bad_budgets() {
    let mut inst = random_instance(2, StreamKey::new(1, "bad"));
    inst.b_d2u_total = 0.0;
    assert!(matches!(solve(&inst, &AlmConfig::default()), Err(hflsim_core::Error::Infeasible(_))));
}

#[test]
fn fixed_iteration_count_is_respected_and_never_cheaper() {
    for seed in 0..10 {
        let inst = random_instance(3, StreamKey::new(seed, "fixed"));
        let free = solve(&inst, &AlmConfig::default()).unwrap();
        let fixed = solve_fixed_h(&inst, &AlmConfig::default(), 3).unwrap();
        assert_eq!(fixed.h_star, 3);
        assert!(fixed.objective_value >= free.objective_value * (1.0 - 1e-6));
    }
}

fn segment_point(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn objective_is_midpoint_convex(seed in 0u64..10_000, n in 1usize..5, raw in prop::collection::vec(0.01f64..1.0, 20), h1 in 1.0f64..20.0, h2 in 1.0f64..20.0) {
        let inst = random_instance(n, StreamKey::new(seed, "cvx"));
        let norm = |v: &[f64], total: f64| { let s: f64 = v.iter().sum(); v.iter().map(|x| x / s * total).collect::<Vec<_>>() };
        let xd = norm(&raw[0..n], inst.b_d2u_total);
        let xu = norm(&raw[5..5 + n], inst.b_u2d_total);
        let yd = norm(&raw[10..10 + n], inst.b_d2u_total);
        let yu = norm(&raw[15..15 + n], inst.b_u2d_total);
        let fx = objective(&inst, h1, &xd, &xu);
        let fy = objective(&inst, h2, &yd, &yu);
        let fm = objective(&inst, 0.5 * (h1 + h2), &segment_point(&xd, &yd, 0.5), &segment_point(&xu, &yu, 0.5));
        prop_assert!(fm <= 0.5 * (fx + fy) + 1e-9);
    }

    #[test]
    fn shrinking_bandwidth_increases_objective(seed in 0u64..10_000, n in 1usize..5, who in 0usize..5, f in 0.05f64..0.95) {
        let inst = random_instance(n, StreamKey::new(seed, "mono"));
        let who = who % n;
        let bd = vec![inst.b_d2u_total / n as f64; n];
        let bu = vec![inst.b_u2d_total / n as f64; n];
        let mut smaller = bd.clone();
        smaller[who] *= f;
        prop_assert!(objective(&inst, 1.0, &smaller, &bu) > objective(&inst, 1.0, &bd, &bu));
    }
}
