//! Round engine: hand-traced miniature round, battery-triggered aggregation,
//! stop rules, determinism and run-level invariants.

#![allow(clippy::field_reassign_with_default)]

use hflsim_core::config::{Redeploy, Selection, SimConfig};
use hflsim_core::cost::global_totals;
use hflsim_core::exec::Exec;
use hflsim_core::orchestrator::{handle_dropout, p1_p2_fixed_point, run, RunStatus, Simulator};
use hflsim_core::Result;

fn rate(b: f64, p: f64, d: f64, alpha: f64, n0: f64) -> f64 {
    b * (1.0 + p * d.powf(-alpha) / (n0 * b)).log2()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn small(seed: u64, n_uavs: usize, n_devices: usize) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.seed = seed;
    cfg.net.n_uavs = n_uavs;
    cfg.net.n_devices = n_devices;
    cfg.orchestrator.selection = Selection::Fixed;
    cfg.orchestrator.max_rounds = 4;
    cfg.learner.test_size = 200;
    cfg
}

fn miniature() -> SimConfig {
    let mut cfg = small(21, 1, 2);
    cfg.cost.k_max = 1;
    cfg.orchestrator.threshold = 0.0;
    cfg.orchestrator.redeploy = Redeploy::DirectDrop;
    cfg.orchestrator.max_rounds = 1;
    cfg
}

#[test]
fn miniature_round_matches_hand_trace() {
    let cfg = miniature();
    let mut sim = Simulator::new(cfg.clone()).unwrap();
    let battery0 = sim.state.uav_profiles[0].battery;
    sim.step().unwrap();
    let log = &sim.logs()[0];
    assert_eq!((log.k_g, log.phi, log.aggregator), (1, false, 0));
    assert_eq!(log.selections, vec![vec![0, 1]]);

    let ch = cfg.net.channel();
    let u = sim.state.uav_profiles[0];
    let pos = log.uav_positions[0];
    let h = log.h_star[0] as f64;
    let i_bits = cfg.cost.model_bits;
    let (mut t_hover, mut t_u2d_max, mut e_devs) = (0.0f64, 0.0f64, 0.0);
    for (i, &n) in log.selections[0].iter().enumerate() {
        let p = sim.state.device_profiles[n];
        let d = log.device_positions[n];
        let dist = ((d.x - pos.x).powi(2) + (d.y - pos.y).powi(2) + pos.altitude.powi(2)).sqrt();
        let r_up = rate(log.b_d2u[0][i], p.p_d2u, dist, ch.alpha_d2u, ch.n0);
        let r_dn = rate(log.b_u2d[0][i], u.p_u2d, dist, ch.alpha_u2d, ch.n0);
        let t_unit = p.t_fix + p.phi * p.c * p.dataset_size as f64 / p.f;
        let t_dev = h * t_unit + p.i_d2u / r_up + i_bits / r_dn;
        t_hover = t_hover.max(t_dev);
        t_u2d_max = t_u2d_max.max(i_bits / r_dn);
        e_devs += h * p.f * p.f * p.phi * p.c * p.dataset_size as f64 * p.theta / 2.0 + p.i_d2u / r_up * p.p_d2u;
    }
    let e_uav = t_hover * u.p_hover + t_u2d_max * u.p_u2d;
    let t_broad = t_u2d_max;
    let e_broad = t_u2d_max * u.p_u2d;
    let e_bwait = t_broad * u.p_hover;
    let c = &log.costs;
    assert!(rel_close(c.broadcast.t_broad, t_broad, 1e-12));
    assert!(rel_close(c.broadcast.e_broad, e_broad, 1e-12));
    assert!(rel_close(c.broadcast.e_bwait, e_bwait, 1e-12));
    assert!(rel_close(c.uavs[0].rounds[0].t_hover, t_hover, 1e-12));
    assert!(rel_close(c.uavs[0].rounds[0].e_uav, e_uav, 1e-12));
    assert_eq!((c.uavs[0].t_delay, c.uavs[0].e_delay), (0.0, 0.0));
    assert!(rel_close(log.t_total, t_broad + t_hover, 1e-12));
    assert!(rel_close(log.e_total, e_broad + e_bwait + e_uav + e_devs, 1e-12));
    assert!(rel_close(log.batteries[0], battery0 - (e_broad + e_bwait) - e_uav, 1e-12));
}

#[test]
fn battery_budget_triggers_aggregation_at_second_edge_round() {
    let mut cfg = miniature();
    cfg.cost.k_max = 10;
    let generous = run(&cfg).unwrap();
    let log = &generous.logs[0];
    assert_eq!((log.k_g, log.phi), (10, false));
    let e = log.costs.uavs[0].rounds[0].e_uav;
    assert!(log.costs.uavs[0].rounds.iter().all(|r| r.e_uav == e));
    let b = &log.costs.broadcast;
    let start = b.e_broad + b.e_bwait;

    cfg.cost.uav.battery_j_per_uav = vec![start + 2.5 * e];
    let tight = run(&cfg).unwrap();
    let log = &tight.logs[0];
    assert_eq!((log.k_g, log.phi), (2, true));
    assert_eq!(log.costs.uavs[0].rounds.len(), 2);
    assert_eq!(log.dropouts, vec![0]);
    assert_eq!(tight.status, RunStatus::FleetExhausted);
    assert!(log.batteries[0] >= 0.0);
}

#[test]
fn huge_delta_converges_after_first_round() {
    let mut cfg = small(2, 2, 12);
    cfg.orchestrator.delta = 1e9;
    let s = run(&cfg).unwrap();
    assert_eq!((s.status, s.rounds), (RunStatus::Converged, 1));
    assert!(s.logs[0].converged);
}

#[test]
fn zero_rounds_is_not_run() {
    let mut cfg = small(2, 2, 12);
    cfg.orchestrator.max_rounds = 0;
    let s = run(&cfg).unwrap();
    assert_eq!((s.status, s.rounds), (RunStatus::NotRun, 0));
    assert!(s.logs.is_empty() && s.dropouts.is_empty());
}

#[test]
fn same_seed_gives_identical_summary_bytes() {
    let mut cfg = small(8, 3, 20);
    cfg.orchestrator.selection = Selection::Adaptive;
    cfg.orchestrator.max_rounds = 3;
    let a = serde_json::to_vec(&run(&cfg).unwrap()).unwrap();
    let b = serde_json::to_vec(&run(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    cfg.orchestrator.exec = Exec::Sequential;
    let c = serde_json::to_vec(&run(&cfg).unwrap()).unwrap();
    assert_eq!(a, c);
    cfg.seed = 9;
    assert_ne!(a, serde_json::to_vec(&run(&cfg).unwrap()).unwrap());
}

#[test]
fn direct_drop_never_moves_uavs() {
    let mut cfg = small(4, 4, 40);
    cfg.orchestrator.redeploy = Redeploy::DirectDrop;
    cfg.cost.uav.battery_j_per_uav = vec![2e5, 40.0, 2e5, 2e5];
    let s = run(&cfg).unwrap();
    assert!(!s.dropouts.is_empty());
    let first = &s.logs[0].uav_positions;
    for l in &s.logs {
        assert_eq!(&l.uav_positions, first);
        assert!(l.moves.is_empty());
        assert_eq!(l.coverage_post_drop, l.coverage_post_redeploy);
    }
}

#[test]
fn run_invariants_hold_across_seeds_and_strategies() {
    let strategies = [Selection::Fixed, Selection::Random, Selection::DistanceOnly, Selection::SimilarityOnly];
    for seed in 0..8u64 {
        let mut cfg = small(seed, 4, 40);
        cfg.orchestrator.selection = strategies[seed as usize % strategies.len()];
        cfg.orchestrator.max_rounds = 5;
        cfg.cost.uav.battery_j_per_uav = vec![2e5, 60.0 + 20.0 * seed as f64, 2e5, 2e5];
        let mut sim = Simulator::new(cfg.clone()).unwrap();
        let mut prev = sim.state.uav_profiles.iter().map(|p| p.battery).collect::<Vec<_>>();
        let mut active = sim.state.active.clone();
        for _ in 0..cfg.orchestrator.max_rounds {
            if !sim.step().unwrap() {
                break;
            }
        }
        for l in sim.logs() {
            assert!(l.k_g >= 1 && l.k_g <= cfg.cost.k_max);
            assert!(l.k_g == cfg.cost.k_max || l.phi);
            assert!(active.contains(&l.aggregator), "seed {seed}: aggregator must be active");
            assert_eq!(l.uav_ids, active);
            for (b, p) in l.batteries.iter().zip(&prev) {
                assert!(*b >= 0.0 && b <= p);
            }
            prev = l.batteries.clone();
            let (t, e) = global_totals(&l.costs);
            assert_eq!((t, e), (l.t_total, l.e_total));
            let mut seen: Vec<usize> = l.selections.iter().flatten().copied().collect();
            let n = seen.len();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), n, "a device joined two UAVs");
            assert!(l.coverage_post_redeploy >= l.coverage_post_drop);
            for m in &l.moves {
                assert!(m.benefit.value > m.threshold);
            }
            active = handle_dropout(&active, &l.dropouts);
            if !active.is_empty() {
                assert!(active.contains(&l.next_aggregator));
            }
        }
    }
}

#[test]
fn dropped_aggregator_is_replaced_by_a_survivor() {
    let mut cfg = small(6, 3, 30);
    cfg.cost.uav.battery_j_per_uav = vec![15.0, 2e5, 2e5];
    let s = run(&cfg).unwrap();
    let l = &s.logs[0];
    assert_eq!(l.aggregator, 0);
    assert!(l.dropouts.contains(&0));
    assert_ne!(l.next_aggregator, 0);
    assert_eq!(s.logs[1].aggregator, l.next_aggregator);
    assert!(!s.logs[1].uav_ids.contains(&0));
}

#[test]
fn handle_dropout_examples() {
    assert_eq!(handle_dropout(&[0, 1, 2, 3, 4], &[]), vec![0, 1, 2, 3, 4]);
    assert_eq!(handle_dropout(&[0, 1, 2, 3, 4], &[1, 3]), vec![0, 2, 4]);
    assert_eq!(handle_dropout(&[2, 4], &[2, 4]), Vec::<usize>::new());
}

#[test]
fn fixed_point_stops_when_selection_repeats() {
    let mut solves = 0;
    let fp = p1_p2_fixed_point(
        vec![1, 2, 3],
        |s: &Vec<usize>| -> Result<usize> {
            solves += 1;
            Ok(s.len())
        },
        |s, _| Ok(s.clone()),
        5,
    )
    .unwrap();
    assert_eq!((fp.solves, fp.stable, fp.solution), (1, true, 3));
    assert_eq!(solves, 1);
}

#[test]
fn fixed_point_shrinks_then_settles() {
    let fp = p1_p2_fixed_point(
        vec![1, 2, 3, 4],
        |s: &Vec<usize>| -> Result<usize> { Ok(s.iter().sum()) },
        |s, total| Ok(if *total > 3 { s[..s.len() - 1].to_vec() } else { s.clone() }),
        10,
    )
    .unwrap();
    assert_eq!(fp.selection, vec![1, 2]);
    assert_eq!((fp.solution, fp.solves, fp.stable), (3, 3, true));
}

#[test]
fn oscillating_selection_stops_at_cap_with_matching_solution() {
    let fp = p1_p2_fixed_point(
        vec![0],
        |s: &Vec<usize>| -> Result<Vec<usize>> { Ok(s.clone()) },
        |s, _| Ok(if s == &vec![0] { vec![1] } else { vec![0] }),
        5,
    )
    .unwrap();
    assert_eq!((fp.solves, fp.stable), (5, false));
    assert_eq!(fp.solution, fp.selection);
    assert_eq!(fp.selection, vec![0]);
}

#[test]
fn invalid_config_is_rejected_with_path() {
    let mut cfg = small(1, 2, 10);
    cfg.p2.lambda1 = 0.5;
    let err = Simulator::new(cfg).err().unwrap().to_string();
    assert!(err.contains("p2.lambda"), "{err}");
}
