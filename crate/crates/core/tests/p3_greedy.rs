//! Repositioning search and aggregator election properties.

use hflsim_core::cost::UavProfile;
use hflsim_core::net::{grid_uav_positions, place_devices, DevicePos, Field, UavPos};
use hflsim_core::p3::*;
use hflsim_core::rng::StreamKey;
use proptest::prelude::*;

fn profile() -> UavProfile {
    UavProfile {
        p_hover: 100.0,
        p_move: 160.0,
        speed: 16.0,
        p_u2d: 0.5,
        p_u2u: 0.8,
        battery: 1e6,
        b_d2u_total: 2e7,
        b_u2d_total: 2e7,
        b_u2u: 2e6,
        i_u2d: 1e5,
        i_u2u: 1e5,
    }
}

fn at(x: f64, y: f64) -> UavPos {
    UavPos { x, y, altitude: 150.0 }
}

const FIELD: Field = Field { size: 20_000.0 };

#[test]
fn no_gain_landscape_keeps_position() {
    let devices = vec![DevicePos { x: 10_000.0, y: 10_000.0 }];
    let uavs = [at(10_000.0, 10_000.0)];
    let p = profile();
    let env = SearchEnv {
        uavs: &uavs,
        active: &[0],
        devices: &devices,
        radius: 300.0,
        field: FIELD,
        profile: &p,
        budget: f64::INFINITY,
    };
    let cfg = SearchConfig { lambda9: 0.5, ..Default::default() };
    let t = rough_search(0, &env, &cfg);
    assert_eq!(t.position, uavs[0]);
    assert!(t.moves.is_empty());
    assert_eq!(t.probe_rounds, 8);
}

#[test]
fn eastern_cluster_draws_the_first_move_east() {
    let devices: Vec<DevicePos> = (0..5).map(|i| DevicePos { x: 10_700.0 + 10.0 * i as f64, y: 10_000.0 }).collect();
    let uavs = [at(10_000.0, 10_000.0)];
    let p = profile();
    let env = SearchEnv {
        uavs: &uavs,
        active: &[0],
        devices: &devices,
        radius: 500.0,
        field: FIELD,
        profile: &p,
        budget: f64::INFINITY,
    };
    let t = rough_search(0, &env, &SearchConfig::default());
    assert_eq!(t.moves[0].direction, 0);
    assert!(t.moves[0].to.x > uavs[0].x);
    assert_eq!(t.moves[0].coverage_after, 5);
}

#[test]
fn zero_patience_is_identity() {
    let devices = vec![DevicePos { x: 10_400.0, y: 10_000.0 }];
    let uavs = [at(10_000.0, 10_000.0)];
    let p = profile();
    let env = SearchEnv {
        uavs: &uavs,
        active: &[0],
        devices: &devices,
        radius: 300.0,
        field: FIELD,
        profile: &p,
        budget: f64::INFINITY,
    };
    let t = rough_search(0, &env, &SearchConfig { chi1: 0, ..Default::default() });
    assert_eq!((t.position, t.probe_rounds), (uavs[0], 0));
}

#[test]
fn flat_landscape_ends_precise_stage_after_patience() {
    let uavs = [at(5_000.0, 5_000.0)];
    let p = profile();
    let env = SearchEnv {
        uavs: &uavs,
        active: &[0],
        devices: &[],
        radius: 300.0,
        field: FIELD,
        profile: &p,
        budget: f64::INFINITY,
    };
    let t = precise_search(0, &env, &SearchConfig::default());
    assert_eq!((t.position, t.probe_rounds), (uavs[0], 6));
}

#[test]
fn zero_fine_step_is_identity() {
    let devices = vec![DevicePos { x: 5_050.0, y: 5_000.0 }];
    let uavs = [at(5_000.0, 4_000.0)];
    let p = profile();
    let env = SearchEnv {
        uavs: &uavs,
        active: &[0],
        devices: &devices,
        radius: 300.0,
        field: FIELD,
        profile: &p,
        budget: f64::INFINITY,
    };
    let t = precise_search(0, &env, &SearchConfig { d_set_fine: 0.0, ..Default::default() });
    assert_eq!(t.position, uavs[0]);
}

#[test]
fn refinement_never_loses_coverage() {
    for seed in 0..20 {
        let uavs = grid_uav_positions(4, FIELD, 150.0);
        let devices = place_devices(120, &uavs, 2_000.0, FIELD, StreamKey::new(seed, "dev"));
        let shifted: Vec<UavPos> = uavs.iter().map(|u| at(u.x + 900.0, u.y - 700.0)).collect();
        let p = profile();
        let active = [0, 1, 2, 3];
        let cfg = SearchConfig::default();
        let env = SearchEnv {
            uavs: &shifted,
            active: &active,
            devices: &devices,
            radius: 2_000.0,
            field: FIELD,
            profile: &p,
            budget: f64::INFINITY,
        };
        let rough = rough_search(0, &env, &cfg);
        let mut after_rough = shifted.clone();
        after_rough[0] = rough.position;
        let env2 = SearchEnv { uavs: &after_rough, ..env };
        let fine = precise_search(0, &env2, &cfg);
        let mut after_fine = after_rough.clone();
        after_fine[0] = fine.position;
        let c = |u: &[UavPos]| coverage_count(0, u[0], u, &active, &devices, 2_000.0, CoverageMetric::Marginal);
        assert!(c(&after_fine) >= c(&after_rough));
    }
}

#[test]
fn redeployment_recovers_coverage_after_a_dropout() {
    for seed in 0..10 {
        let uavs = grid_uav_positions(5, FIELD, 150.0);
        let devices = place_devices(150, &uavs, 4_000.0, FIELD, StreamKey::new(seed, "dev"));
        let active = [0, 2, 3, 4];
        let profiles = vec![profile(); 5];
        let before = union_coverage(&uavs, &active, &devices, 4_000.0);
        let cfg = SearchConfig::default();
        let out = redeploy_and_select(&uavs, &active, &devices, 4_000.0, FIELD, &profiles, &[f64::INFINITY; 5], &cfg)
            .unwrap();
        let after = union_coverage(&out.positions, &active, &devices, 4_000.0);
        assert!(after >= before, "seed {seed}: {after} < {before}");
        assert_eq!(out.positions[1], uavs[1]);
        for mv in &out.moves {
            assert!(mv.benefit.value > mv.threshold);
        }
        for m in 0..5 {
            let steps: f64 = out
                .moves
                .iter()
                .filter(|mv| mv.uav == m)
                .map(|mv| if mv.stage == Stage::Rough { cfg.d_set } else { cfg.d_set_fine })
                .sum();
            assert!((out.distance[m] - steps).abs() < 1e-9);
            assert!((out.energy[m] - steps / 16.0 * 160.0).abs() < 1e-6);
        }
        assert!(out.positions.iter().all(|p| FIELD.contains(p.x, p.y)));
    }
}

#[test]
fn unmoved_fleet_only_elects() {
    let uavs = [at(1_000.0, 1_000.0), at(3_000.0, 1_000.0)];
    let profiles = vec![profile(); 2];
    let cfg = SearchConfig { chi1: 0, chi2: 0, ..Default::default() };
    let out = redeploy_and_select(&uavs, &[0, 1], &[], 500.0, FIELD, &profiles, &[f64::INFINITY; 5], &cfg).unwrap();
    assert_eq!(out.positions, uavs.to_vec());
    assert_eq!(out.energy, vec![0.0, 0.0]);
    assert_eq!(out.choice.uav, 0);
}

fn brute_force(uavs: &[UavPos]) -> usize {
    let sums: Vec<f64> =
        (0..uavs.len()).map(|m| (0..uavs.len()).map(|o| uavs[o].distance_to(&uavs[m])).sum()).collect();
    let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
    sums.iter().position(|s| *s == min).unwrap()
}

proptest! {
    #[test]
    fn election_matches_exhaustive_oracle(pts in prop::collection::vec((0.0..20_000.0f64, 0.0..20_000.0f64), 5)) {
        let uavs: Vec<UavPos> = pts.iter().map(|&(x, y)| at(x, y)).collect();
        let c = elect_aggregator(&uavs, &[0, 1, 2, 3, 4]).unwrap();
        prop_assert_eq!(c.uav, brute_force(&uavs));
    }

    #[test]
    fn election_is_translation_invariant(
        pts in prop::collection::vec((0.0..10_000.0f64, 0.0..10_000.0f64), 2..7),
        dx in -5_000.0..5_000.0f64,
        dy in -5_000.0..5_000.0f64,
    ) {
        let uavs: Vec<UavPos> = pts.iter().map(|&(x, y)| at(x, y)).collect();
        let moved: Vec<UavPos> = pts.iter().map(|&(x, y)| at(x + dx, y + dy)).collect();
        let active: Vec<usize> = (0..uavs.len()).collect();
        let a = elect_aggregator(&uavs, &active).unwrap();
        let b = elect_aggregator(&moved, &active).unwrap();
        prop_assert!((a.distance_sum - b.distance_sum).abs() <= 1e-6 * a.distance_sum.max(1.0));
        let gap = {
            let mut sums: Vec<f64> = active.iter().map(|&m| active.iter().map(|&o| uavs[o].distance_to(&uavs[m])).sum()).collect();
            sums.sort_by(f64::total_cmp);
            if sums.len() > 1 { sums[1] - sums[0] } else { f64::INFINITY }
        };
        if gap > 1e-6 {
            prop_assert_eq!(a.uav, b.uav);
        }
    }

    #[test]
    fn searches_stay_in_field_and_accept_above_threshold(
        ux in 0.0..20_000.0f64, uy in 0.0..20_000.0f64, seed in 0u64..1000,
    ) {
        let uavs = vec![at(ux, uy), at(10_000.0, 10_000.0)];
        let devices = place_devices(60, &uavs, 2_500.0, FIELD, StreamKey::new(seed, "dev"));
        let profiles = vec![profile(); 2];
        let out = redeploy_and_select(&uavs, &[0, 1], &devices, 2_500.0, FIELD, &profiles, &[f64::INFINITY; 2], &SearchConfig::default()).unwrap();
        prop_assert!(out.positions.iter().all(|p| FIELD.contains(p.x, p.y)));
        prop_assert!(out.moves.iter().all(|m| m.benefit.value > m.threshold));
        prop_assert!(union_coverage(&out.positions, &[0, 1], &devices, 2_500.0) >= union_coverage(&uavs, &[0, 1], &devices, 2_500.0));
    }
}
