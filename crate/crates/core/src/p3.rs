//! Two-stage greedy UAV repositioning and global aggregator election.

use serde::{Deserialize, Serialize};

use crate::cost::UavProfile;
use crate::error::{Error, Result};
use crate::net::{horizontal_distance, DevicePos, Field, UavPos};

/// How a UAV counts the devices it covers while searching.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMetric {
    /// Devices covered by this UAV and by no other active UAV.
    #[default]
    Marginal,
    /// Every device inside this UAV's disc.
    Own,
}

/// Parameters of the rough and precise direction searches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Step length of the rough stage, m.
    pub d_set: f64,
    /// Step length of the precise stage, m.
    pub d_set_fine: f64,
    /// Number of rough directions.
    pub n_rough: usize,
    /// Number of precise directions.
    pub n_fine: usize,
    /// Benefit threshold of the rough stage.
    pub xi1: f64,
    /// Benefit threshold of the precise stage.
    pub xi2: f64,
    /// Consecutive low-benefit rounds that end the rough stage.
    pub chi1: u32,
    /// Consecutive low-benefit rounds that end the precise stage.
    pub chi2: u32,
    /// Weight of the coverage gain.
    pub lambda8: f64,
    /// Weight of the movement energy.
    pub lambda9: f64,
    pub coverage: CoverageMetric,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            d_set: 250.0,
            d_set_fine: 80.0,
            n_rough: 10,
            n_fine: 16,
            xi1: 0.01,
            xi2: 0.01,
            chi1: 8,
            chi2: 6,
            lambda8: 1.0,
            lambda9: 1e-6,
            coverage: CoverageMetric::Marginal,
        }
    }
}

impl SearchConfig {
    /// Checks the invariants, reporting the offending key.
    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, msg: &str| Err(Error::Config { path: format!("p3.{key}"), msg: msg.into() });
        if !(self.d_set > 0.0 && self.d_set.is_finite()) {
            return fail("d_set", "must be positive");
        }
        if !(self.d_set_fine > 0.0 && self.d_set_fine < self.d_set) {
            return fail("d_set_fine", "must be positive and below d_set");
        }
        if self.n_rough < 2 {
            return fail("n_rough", "must be at least 2");
        }
        if self.n_fine < 2 {
            return fail("n_fine", "must be at least 2");
        }
        if !(self.xi1 >= 0.0 && self.xi1.is_finite()) {
            return fail("xi1", "must be non-negative");
        }
        if !(self.xi2 >= 0.0 && self.xi2.is_finite()) {
            return fail("xi2", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.lambda8) {
            return fail("lambda8", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda9) {
            return fail("lambda9", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Benefit of one candidate move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveBenefit {
    /// Relative coverage increase.
    pub coverage_gain: f64,
    /// Cumulative movement energy of the attempt, J.
    pub energy_term: f64,
    /// `lambda8 coverage_gain - lambda9 energy_term`.
    pub value: f64,
}

/// The elected global aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatorChoice {
    pub uav: usize,
    /// Sum of distances from the aggregator to every other active UAV, m.
    pub distance_sum: f64,
}

/// Search stage of an accepted move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Rough,
    Precise,
}

/// One accepted greedy step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptedMove {
    pub uav: usize,
    pub stage: Stage,
    pub direction: usize,
    pub from: UavPos,
    pub to: UavPos,
    pub coverage_before: usize,
    pub coverage_after: usize,
    pub benefit: MoveBenefit,
    /// Threshold the benefit had to exceed.
    pub threshold: f64,
}

/// Result of one search stage for one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub position: UavPos,
    pub moves: Vec<AcceptedMove>,
    /// Number of probe rounds, accepted or not.
    pub probe_rounds: u32,
    /// Flight distance of the accepted moves, m.
    pub distance: f64,
}

/// Benefit of moving after `attempt_b` accepted steps of length `d_set`.
pub fn move_benefit(
    cov_before: usize,
    cov_after: usize,
    attempt_b: u32,
    d_set: f64,
    lambda8: f64,
    lambda9: f64,
    uav: &UavProfile,
) -> MoveBenefit {
    let coverage_gain = if cov_before == 0 { cov_after as f64 } else { cov_after as f64 / cov_before as f64 - 1.0 };
    let energy_term = attempt_b as f64 * d_set / uav.speed * uav.p_move;
    MoveBenefit { coverage_gain, energy_term, value: lambda8 * coverage_gain - lambda9 * energy_term }
}

/// Coverage count of `uavs[me]` under `metric`, considering only `active` UAVs as rivals.
pub fn coverage_count(
    me: usize,
    pos: UavPos,
    uavs: &[UavPos],
    active: &[usize],
    devices: &[DevicePos],
    radius: f64,
    metric: CoverageMetric,
) -> usize {
    devices
        .iter()
        .filter(|d| horizontal_distance(**d, pos) <= radius)
        .filter(|d| match metric {
            CoverageMetric::Own => true,
            CoverageMetric::Marginal => !active.iter().any(|&m| m != me && horizontal_distance(**d, uavs[m]) <= radius),
        })
        .count()
}

/// Number of devices inside at least one active UAV's disc.
pub fn union_coverage(uavs: &[UavPos], active: &[usize], devices: &[DevicePos], radius: f64) -> usize {
    devices.iter().filter(|d| active.iter().any(|&m| horizontal_distance(**d, uavs[m]) <= radius)).count()
}

/// Shared context of a search.
#[derive(Debug, Clone, Copy)]
pub struct SearchEnv<'a> {
    pub uavs: &'a [UavPos],
    pub active: &'a [usize],
    pub devices: &'a [DevicePos],
    pub radius: f64,
    pub field: Field,
    pub profile: &'a UavProfile,
    /// Flight energy the UAV may spend in this stage, J.
    pub budget: f64,
}

struct StageParams {
    stage: Stage,
    step: f64,
    directions: usize,
    xi: f64,
    chi: u32,
}

fn run_stage(me: usize, env: &SearchEnv<'_>, cfg: &SearchConfig, p: StageParams) -> SearchTrace {
    let mut uavs = env.uavs.to_vec();
    let mut pos = uavs[me];
    let mut trace = SearchTrace { position: pos, moves: Vec::new(), probe_rounds: 0, distance: 0.0 };
    if !(p.step > 0.0) {
        return trace;
    }
    let count =
        |uavs: &[UavPos], at: UavPos| coverage_count(me, at, uavs, env.active, env.devices, env.radius, cfg.coverage);
    let mut low = 0u32;
    let mut accepted = 0u32;
    while low < p.chi {
        trace.probe_rounds += 1;
        let before = count(&uavs, pos);
        let mut best: Option<(usize, UavPos, usize, MoveBenefit)> = None;
        for k in 0..p.directions {
            let theta = std::f64::consts::TAU * k as f64 / p.directions as f64;
            let cand = UavPos { x: pos.x + p.step * theta.cos(), y: pos.y + p.step * theta.sin(), ..pos };
            if !env.field.contains(cand.x, cand.y) {
                continue;
            }
            if (trace.distance + p.step) / env.profile.speed * env.profile.p_move > env.budget {
                continue;
            }
            let after = count(&uavs, cand);
            let b = move_benefit(before, after, accepted + 1, p.step, cfg.lambda8, cfg.lambda9, env.profile);
            if best.is_none_or(|(_, _, _, bb)| b.value > bb.value) {
                best = Some((k, cand, after, b));
            }
        }
        match best {
            Some((k, cand, after, b)) if b.value > p.xi && b.value > 0.0 => {
                trace.moves.push(AcceptedMove {
                    uav: me,
                    stage: p.stage,
                    direction: k,
                    from: pos,
                    to: cand,
                    coverage_before: before,
                    coverage_after: after,
                    benefit: b,
                    threshold: p.xi,
                });
                trace.distance += p.step;
                accepted += 1;
                pos = cand;
                uavs[me] = cand;
                low = 0;
            }
            _ => low += 1,
        }
    }
    trace.position = pos;
    trace
}

/// Rough stage: `n_rough` directions with step `d_set` until `chi1` low-benefit rounds in a row.
pub fn rough_search(me: usize, env: &SearchEnv<'_>, cfg: &SearchConfig) -> SearchTrace {
    let p = StageParams { stage: Stage::Rough, step: cfg.d_set, directions: cfg.n_rough, xi: cfg.xi1, chi: cfg.chi1 };
    run_stage(me, env, cfg, p)
}

/// Precise stage: `n_fine` directions with step `d_set_fine` until `chi2` low-benefit rounds in a row.
pub fn precise_search(me: usize, env: &SearchEnv<'_>, cfg: &SearchConfig) -> SearchTrace {
    let p =
        StageParams { stage: Stage::Precise, step: cfg.d_set_fine, directions: cfg.n_fine, xi: cfg.xi2, chi: cfg.chi2 };
    run_stage(me, env, cfg, p)
}

/// The active UAV with the smallest distance sum to the others, lowest id on ties.
pub fn elect_aggregator(uavs: &[UavPos], active: &[usize]) -> Result<AggregatorChoice> {
    let mut best: Option<AggregatorChoice> = None;
    for &m in active {
        let distance_sum: f64 = active.iter().filter(|&&o| o != m).map(|&o| uavs[o].distance_to(&uavs[m])).sum();
        if best.is_none_or(|b| distance_sum < b.distance_sum) {
            best = Some(AggregatorChoice { uav: m, distance_sum });
        }
    }
    best.ok_or(Error::Empty("active UAV set"))
}

/// Outcome of repositioning the fleet and electing the aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Redeployment {
    pub positions: Vec<UavPos>,
    pub choice: AggregatorChoice,
    pub moves: Vec<AcceptedMove>,
    /// Flight distance per UAV, indexed like `positions`, m.
    pub distance: Vec<f64>,
    /// Flight energy per UAV, J.
    pub energy: Vec<f64>,
}

/// Repositions every active UAV in id order, then elects the aggregator.
///
/// Each UAV sees the already updated positions of the UAVs searched before it.
/// `budgets[m]` caps the flight energy of UAV `m` over both stages.
#[allow(clippy::too_many_arguments)]
pub fn redeploy_and_select(
    uavs: &[UavPos],
    active: &[usize],
    devices: &[DevicePos],
    radius: f64,
    field: Field,
    profiles: &[UavProfile],
    budgets: &[f64],
    cfg: &SearchConfig,
) -> Result<Redeployment> {
    let mut positions = uavs.to_vec();
    let mut moves = Vec::new();
    let mut distance = vec![0.0; uavs.len()];
    let mut energy = vec![0.0; uavs.len()];
    let mut order = active.to_vec();
    order.sort_unstable();
    for &m in &order {
        for stage in [Stage::Rough, Stage::Precise] {
            let budget = budgets[m] - energy[m];
            let env = SearchEnv { uavs: &positions, active, devices, radius, field, profile: &profiles[m], budget };
            let trace = match stage {
                Stage::Rough => rough_search(m, &env, cfg),
                Stage::Precise => precise_search(m, &env, cfg),
            };
            positions[m] = trace.position;
            distance[m] += trace.distance;
            energy[m] += trace.distance / profiles[m].speed * profiles[m].p_move;
            moves.extend(trace.moves);
        }
    }
    let choice = elect_aggregator(&positions, active)?;
    Ok(Redeployment { positions, choice, moves, distance, energy })
}
