//! Global round engine: selection, allocation, edge training, energy checks,
//! global aggregation, dropout handling, redeployment and mobility.

mod select;

pub use select::{random_subset, state_of, strategy_weights, ProbeDevice, ProbeEnv};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Redeploy, Selection, SimConfig};
use crate::cost::{
    broadcast_costs, device_round_costs, edge_iterations, energy_check, periodic_global_aggregation,
    relocation_costs_for_distance, transfer_time, uav_round_energy, BroadcastCosts, BroadcastInput, BroadcastUav,
    CostBreakdown, DeviceCosts, DeviceProfile, EdgeRoundCost, UavProfile, UavRoundCosts,
};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, map_range};
use crate::learner::{
    converged, eval_metrics, fedavg, kld_score, local_sgd, synth_noniid, train_personalized, ClusterSpec, Dataset,
    Metrics, ModelParams, ModelShape, TrainConfig,
};
use crate::net::{
    coverage_set, distance, grid_uav_positions, link_rate, move_devices, place_devices, ChannelParams, DevicePos,
    Field, MobilityModel, UavPos,
};
use crate::p1::{build_instance, solve, P1Solution, SelectedDevice};
use crate::p2::{fitness, resolve_overlaps, select_with_fallback, FitnessInputs, Td3Agent};
use crate::p3::{elect_aggregator, redeploy_and_select, union_coverage, AcceptedMove};
use crate::rng::StreamKey;

/// Mutable state of the network between global rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    /// Last completed global round; 0 before the first.
    pub g: u32,
    /// Ids of the UAVs still in the fleet, ascending.
    pub active: Vec<usize>,
    pub uavs: Vec<UavPos>,
    /// UAV profiles; `battery` holds the energy left.
    pub uav_profiles: Vec<UavProfile>,
    pub devices: Vec<DevicePos>,
    pub device_profiles: Vec<DeviceProfile>,
    /// UAV that aggregates and broadcasts in the next round.
    pub aggregator: usize,
    pub global_model: ModelParams,
    /// Latest local model of each device.
    pub device_models: Vec<ModelParams>,
    /// Latest intermediate model metrics of each UAV on the reward probe set.
    pub uav_metrics: Vec<Metrics>,
    /// Personalized model of each UAV.
    pub personalized: Vec<ModelParams>,
}

/// One dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropoutEvent {
    pub g: u32,
    pub uav: usize,
}

/// Everything recorded about one global round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub g: u32,
    pub k_g: u32,
    pub phi: bool,
    /// UAV that broadcast and aggregated in this round.
    pub aggregator: usize,
    /// UAV elected for the next round.
    pub next_aggregator: usize,
    pub accuracy: f64,
    pub loss: f64,
    pub t_total: f64,
    pub e_total: f64,
    /// Active UAVs of the round, in the order of `costs.uavs`.
    pub uav_ids: Vec<usize>,
    pub costs: CostBreakdown,
    pub coverage_sizes: Vec<usize>,
    pub selection_sizes: Vec<usize>,
    pub selections: Vec<Vec<usize>>,
    pub betas: Vec<Option<f64>>,
    /// Constraint violation of the chosen threshold, s.
    pub violations: Vec<f64>,
    pub alpha_tilde: Vec<f64>,
    pub h_star: Vec<u32>,
    /// Upload bandwidth of each selected device, Hz.
    pub b_d2u: Vec<Vec<f64>>,
    /// Broadcast bandwidth of each selected device, Hz.
    pub b_u2d: Vec<Vec<f64>>,
    /// Allocation solves per UAV in the selection and allocation loop.
    pub p1_solves: Vec<u32>,
    pub dropouts: Vec<usize>,
    /// Battery of every UAV after the round, J.
    pub batteries: Vec<f64>,
    /// Devices covered by the fleet right after dropouts, before repositioning.
    pub coverage_post_drop: usize,
    /// Devices covered after repositioning.
    pub coverage_post_redeploy: usize,
    pub moves: Vec<AcceptedMove>,
    /// UAV positions at the start of the round.
    pub uav_positions: Vec<UavPos>,
    /// Device positions during the round.
    pub device_positions: Vec<DevicePos>,
    pub converged: bool,
}

impl RoundLog {
    /// Total number of selected devices.
    pub fn n_selected(&self) -> usize {
        self.selection_sizes.iter().sum()
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    NotRun,
    Converged,
    MaxRounds,
    FleetExhausted,
}

/// Outcome of a whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    pub rounds: u32,
    pub final_accuracy: f64,
    pub final_loss: f64,
    pub total_t: f64,
    pub total_e: f64,
    pub dropouts: Vec<DropoutEvent>,
    pub logs: Vec<RoundLog>,
}

impl RunSummary {
    /// First round whose global accuracy reaches `target`.
    pub fn first_round_reaching(&self, target: f64) -> Option<u32> {
        self.logs.iter().find(|l| l.accuracy >= target).map(|l| l.g)
    }

    /// Sum of `w_e E + w_t T` over the rounds up to and including `g`.
    pub fn weighted_cost_until(&self, g: u32, w_e: f64, w_t: f64) -> f64 {
        self.logs.iter().take_while(|l| l.g <= g).map(|l| w_e * l.e_total + w_t * l.t_total).sum()
    }
}

/// Result of alternating selection and allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<S, P> {
    pub selection: S,
    pub solution: P,
    /// Number of allocation solves.
    pub solves: u32,
    /// Whether the selection stopped changing before the cap.
    pub stable: bool,
}

/// Alternates `solve` and `reselect` until the selection repeats or `cap` solves were made.
///
/// The returned solution always belongs to the returned selection.
pub fn p1_p2_fixed_point<S, P>(
    initial: S,
    mut solve: impl FnMut(&S) -> Result<P>,
    mut reselect: impl FnMut(&S, &P) -> Result<S>,
    cap: u32,
) -> Result<FixedPoint<S, P>>
where
    S: PartialEq,
{
    let mut selection = initial;
    let mut solution = solve(&selection)?;
    let mut solves = 1;
    loop {
        let next = reselect(&selection, &solution)?;
        if next == selection {
            return Ok(FixedPoint { selection, solution, solves, stable: true });
        }
        if solves >= cap {
            return Ok(FixedPoint { selection, solution, solves, stable: false });
        }
        selection = next;
        solution = solve(&selection)?;
        solves += 1;
    }
}

/// Active set after removing the flagged UAVs.
pub fn handle_dropout(active: &[usize], flagged: &[usize]) -> Vec<usize> {
    active.iter().copied().filter(|m| !flagged.contains(m)).collect()
}

/// Devices, data and evaluation sets fixed for a whole run.
#[derive(Debug, Clone)]
pub struct World {
    pub datasets: Vec<Dataset>,
    /// Small per-device batches used for model difference scores.
    pub probes: Vec<Dataset>,
    pub test_set: Dataset,
    /// Subset of the test set scoring candidate thresholds.
    pub reward_probe: Dataset,
    pub field: Field,
    pub channel: ChannelParams,
}

/// Costs of one edge round at one UAV.
pub fn edge_round_cost(
    selected: &[(DeviceProfile, f64)],
    h: u32,
    b_d2u: &[f64],
    b_u2d: &[f64],
    uav: &UavProfile,
    channel: &ChannelParams,
) -> Result<EdgeRoundCost> {
    let mut devices: Vec<DeviceCosts> = Vec::with_capacity(selected.len());
    for (i, (p, dist)) in selected.iter().enumerate() {
        devices.push(device_round_costs(p, h, b_d2u[i], b_u2d[i], *dist, channel, uav)?);
    }
    let t_hover = devices.iter().map(|d| d.t_dev).fold(0.0, f64::max);
    let t_u2d = devices.iter().map(|d| d.t_u2d).fold(0.0, f64::max);
    Ok(EdgeRoundCost { t_hover, t_u2d, e_uav: uav_round_energy(t_hover, t_u2d, uav), devices })
}

/// Per-UAV share of the broadcast energy: relay power at the aggregator, broadcast power and waiting.
pub fn broadcast_shares(input: &BroadcastInput, costs: &BroadcastCosts) -> Result<Vec<f64>> {
    let mut t_u2u_max = 0.0f64;
    let mut shares = Vec::with_capacity(input.uavs.len());
    for (m, u) in input.uavs.iter().enumerate() {
        if m != input.aggregator {
            t_u2u_max = t_u2u_max.max(transfer_time(input.i_g, u.u2u_rate_from_agg, "U2U")?);
        }
        let mut t_dev = 0.0f64;
        for &r in &u.u2d_rates {
            t_dev = t_dev.max(transfer_time(input.i_g, r, "U2D")?);
        }
        shares.push(t_dev * u.p_u2d + costs.t_broad * u.p_hover);
    }
    if let Some(s) = shares.get_mut(input.aggregator) {
        *s += t_u2u_max * input.p_u2u_agg;
    }
    Ok(shares)
}

struct UavPlan {
    uav: usize,
    covered: Vec<usize>,
    selected: Vec<usize>,
    beta: Option<f64>,
    violation: f64,
    solution: Option<P1Solution>,
    solves: u32,
}

/// The round engine.
pub struct Simulator {
    pub cfg: SimConfig,
    pub world: World,
    pub state: NetworkState,
    agents: Vec<Option<Td3Agent>>,
    logs: Vec<RoundLog>,
    dropouts: Vec<DropoutEvent>,
    status: RunStatus,
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

impl Simulator {
    /// Builds the initial network, data and models from a validated configuration.
    pub fn new(cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let field = Field { size: cfg.net.field_size };
        let channel = cfg.net.channel();
        let uavs: Vec<UavPos> = if cfg.net.uav_positions.is_empty() {
            grid_uav_positions(cfg.net.n_uavs, field, cfg.net.altitude)
        } else {
            cfg.net.uav_positions.iter().map(|p| UavPos { x: p[0], y: p[1], altitude: cfg.net.altitude }).collect()
        };
        let devices = place_devices(cfg.net.n_devices, &uavs, cfg.net.radius, field, StreamKey::new(seed, "placement"));

        let dc = &cfg.cost.device;
        let dev_stream = StreamKey::new(seed, "device-profiles");
        let device_profiles: Vec<DeviceProfile> = (0..cfg.net.n_devices)
            .map(|n| {
                let mut rng = dev_stream.child(n as u64).rng();
                DeviceProfile {
                    f: uniform(&mut rng, dc.freq_ghz) * 1e9,
                    c: uniform(&mut rng, dc.cycles_per_bit) * dc.bits_per_sample,
                    phi: dc.batch_fraction,
                    theta: dc.theta,
                    t_fix: dc.t_fix,
                    p_d2u: uniform(&mut rng, dc.p_d2u_mw) * 1e-3,
                    dataset_size: cfg.learner.samples_per_device,
                    i_d2u: cfg.cost.model_bits,
                }
            })
            .collect();
        let uc = &cfg.cost.uav;
        let uav_stream = StreamKey::new(seed, "uav-profiles");
        let uav_profiles: Vec<UavProfile> = (0..cfg.net.n_uavs)
            .map(|m| {
                let mut rng = uav_stream.child(m as u64).rng();
                UavProfile {
                    p_hover: uc.p_hover,
                    p_move: uc.p_move,
                    speed: uc.speed,
                    p_u2d: uniform(&mut rng, uc.p_u2d_mw) * 1e-3,
                    p_u2u: uniform(&mut rng, uc.p_u2u_mw) * 1e-3,
                    battery: cfg.cost.battery_of(m),
                    b_d2u_total: uniform(&mut rng, uc.bandwidth_mhz) * 1e6,
                    b_u2d_total: uniform(&mut rng, uc.bandwidth_mhz) * 1e6,
                    b_u2u: uc.b_u2u_mhz * 1e6,
                    i_u2d: cfg.cost.model_bits,
                    i_u2u: cfg.cost.model_bits,
                }
            })
            .collect();

        let lc = &cfg.learner;
        let spec = ClusterSpec { classes: lc.classes, radius: lc.cluster_radius, std: lc.cluster_std };
        let datasets =
            synth_noniid(cfg.net.n_devices, lc.scheme, lc.samples_per_device, &spec, StreamKey::new(seed, "data"))?;
        let probe_stream = StreamKey::new(seed, "probes");
        let probes: Vec<Dataset> = datasets
            .iter()
            .enumerate()
            .map(|(n, d)| d.subset(lc.probe_size.min(d.len()), probe_stream.child(n as u64)))
            .collect();
        let test_set = spec.balanced(lc.test_size, StreamKey::new(seed, "test"));
        let reward_probe = test_set.subset(lc.reward_probe_size, StreamKey::new(seed, "reward-probe"));

        let shape = ModelShape { input_dim: 2, hidden: (lc.hidden > 0).then_some(lc.hidden), classes: lc.classes };
        let global_model = ModelParams::init(shape, StreamKey::new(seed, "model-init"));
        let personal_stream = StreamKey::new(seed, "personal");
        let personalized = (0..cfg.net.n_uavs)
            .map(|m| {
                let s = personal_stream.child(m as u64);
                let data = spec.balanced(lc.personal_samples, s.child(0));
                let tc = TrainConfig { eta: lc.eta, h: 1, batch_fraction: 1.0, seed: s.child(1).raw() };
                train_personalized(&global_model, &data, &tc, lc.personal_steps)
            })
            .collect::<Result<Vec<_>>>()?;
        let base = eval_metrics(&global_model, &reward_probe)?;

        let agents = match cfg.orchestrator.selection {
            Selection::Adaptive => {
                let s = StreamKey::new(seed, "td3");
                (0..cfg.net.n_uavs)
                    .map(|m| Td3Agent::new(cfg.p2.td3, s.child(m as u64)).map(Some))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => vec![None; cfg.net.n_uavs],
        };

        let state = NetworkState {
            g: 0,
            active: (0..cfg.net.n_uavs).collect(),
            uavs,
            uav_profiles,
            devices,
            device_profiles,
            aggregator: 0,
            device_models: vec![global_model.clone(); cfg.net.n_devices],
            global_model,
            uav_metrics: vec![base; cfg.net.n_uavs],
            personalized,
        };
        Ok(Simulator {
            world: World { datasets, probes, test_set, reward_probe, field, channel },
            state,
            agents,
            logs: Vec::new(),
            dropouts: Vec::new(),
            status: RunStatus::NotRun,
            cfg,
        })
    }

    /// Rounds logged so far.
    pub fn logs(&self) -> &[RoundLog] {
        &self.logs
    }

    /// Current run status.
    pub fn status(&self) -> RunStatus {
        self.status
    }

    /// TD3 agent of a UAV, if the adaptive strategy is used.
    pub fn agent(&self, m: usize) -> Option<&Td3Agent> {
        self.agents.get(m).and_then(|a| a.as_ref())
    }

    fn fitness_of(&self, m: usize, covered: &[usize]) -> Result<Vec<f64>> {
        let st = &self.state;
        let kld = covered
            .iter()
            .map(|&n| kld_score(&st.personalized[m], &st.device_models[n], &self.world.probes[n]))
            .collect::<Result<Vec<_>>>()?;
        let inputs = FitnessInputs {
            kld,
            dist: covered.iter().map(|&n| distance(st.devices[n], st.uavs[m])).collect(),
            freq: covered.iter().map(|&n| st.device_profiles[n].f).collect(),
        };
        let weights = strategy_weights(self.cfg.orchestrator.selection, self.cfg.p2.weights());
        fitness(&inputs, &weights)
    }

    fn adaptive_choice(&mut self, m: usize, covered: &[usize], alphas: &[f64]) -> Result<(f64, f64)> {
        let st = &self.state;
        let global = &st.global_model;
        let grads = map_indexed(self.cfg.orchestrator.exec, covered, |_, &n| {
            let data = &self.world.datasets[n];
            let idx: Vec<usize> = (0..data.len()).collect();
            let mut g = vec![0.0; global.params.len()];
            global.loss_and_grad(data, &idx, &mut g);
            g
        });
        let devices: Vec<ProbeDevice> = covered
            .iter()
            .zip(alphas)
            .zip(grads)
            .map(|((&n, &alpha), grad)| ProbeDevice {
                id: n,
                alpha,
                profile: st.device_profiles[n],
                dist: distance(st.devices[n], st.uavs[m]),
                grad,
            })
            .collect();
        let base = eval_metrics(global, &self.world.reward_probe)?;
        let mut env = ProbeEnv {
            devices,
            model: global,
            probe: &self.world.reward_probe,
            base,
            step: self.cfg.learner.eta * self.cfg.p2.probe_lr_scale,
            uav: &st.uav_profiles[m],
            channel: &self.world.channel,
            t_max: self.cfg.t_max(),
            lambda6: self.cfg.p2.lambda6,
            lambda7: self.cfg.p2.lambda7,
        };
        let s = state_of(&st.uav_metrics[m]);
        let agent = self.agents[m].as_mut().ok_or(Error::Empty("TD3 agent"))?;
        if agent.warmup_left() > 0 {
            let w = agent.warmup_left();
            agent.pretrain(&mut env, s, w);
            for _ in 0..self.cfg.p2.pretrain_updates {
                agent.train_step();
            }
        }
        let out = agent.episode_step(&mut env, s);
        Ok((out.beta, out.violation))
    }

    fn selected_devices(&self, m: usize, ids: &[usize]) -> Vec<SelectedDevice> {
        ids.iter()
            .map(|&n| SelectedDevice {
                profile: self.state.device_profiles[n],
                dist: distance(self.state.devices[n], self.state.uavs[m]),
            })
            .collect()
    }

    fn delays_under(&self, m: usize, ids: &[usize], h: u32, b_d2u: &[f64], b_u2d: &[f64]) -> Result<Vec<f64>> {
        let sel: Vec<(DeviceProfile, f64)> =
            self.selected_devices(m, ids).iter().map(|s| (s.profile, s.dist)).collect();
        let c = edge_round_cost(&sel, h, b_d2u, b_u2d, &self.state.uav_profiles[m], &self.world.channel)?;
        Ok(c.devices.iter().map(|d| d.t_dev).collect())
    }

    fn stay_filter(ids: &[usize], delays: &[f64], t_stay: f64) -> Vec<usize> {
        let kept: Vec<usize> = ids.iter().zip(delays).filter(|(_, t)| **t <= t_stay).map(|(n, _)| *n).collect();
        if !kept.is_empty() || ids.is_empty() {
            return kept;
        }
        let mut best = 0;
        for i in 1..ids.len() {
            if delays[i] < delays[best] {
                best = i;
            }
        }
        vec![ids[best]]
    }

    fn allocate(&self, m: usize, initial: Vec<usize>) -> Result<(Vec<usize>, Option<P1Solution>, u32)> {
        if initial.is_empty() {
            return Ok((initial, None, 0));
        }
        let uav = &self.state.uav_profiles[m];
        let t_stay = self.cfg.cost.t_stay;
        let k = initial.len() as f64;
        let even_d2u = vec![uav.b_d2u_total / k; initial.len()];
        let even_u2d = vec![uav.b_u2d_total / k; initial.len()];
        let delays = self.delays_under(m, &initial, 1, &even_d2u, &even_u2d)?;
        let start = Self::stay_filter(&initial, &delays, t_stay);
        let fp = p1_p2_fixed_point(
            start,
            |sel: &Vec<usize>| {
                let inst = build_instance(
                    &self.selected_devices(m, sel),
                    uav,
                    &self.world.channel,
                    self.cfg.cost.lambda4,
                    self.cfg.cost.lambda5,
                )?;
                solve(&inst, &self.cfg.p1)
            },
            |sel, sol| {
                let d = self.delays_under(m, sel, sol.h_star, &sol.b_d2u, &sol.b_u2d)?;
                Ok(Self::stay_filter(sel, &d, t_stay))
            },
            self.cfg.orchestrator.fixed_point_cap,
        )?;
        Ok((fp.selection, Some(fp.solution), fp.solves))
    }

    /// Runs one global round; returns `false` once the run has ended.
    pub fn step(&mut self) -> Result<bool> {
        if matches!(self.status, RunStatus::Converged | RunStatus::FleetExhausted) {
            return Ok(false);
        }
        let g = self.state.g + 1;
        let seed = self.cfg.seed;
        let exec = self.cfg.orchestrator.exec;
        let radius = self.cfg.net.radius;
        let active = self.state.active.clone();
        if !active.contains(&self.state.aggregator) {
            self.state.aggregator = elect_aggregator(&self.state.uavs, &active)?.uav;
        }
        let aggregator = self.state.aggregator;
        let uav_positions = self.state.uavs.clone();
        let device_positions = self.state.devices.clone();

        // Coverage, fitness and threshold selection.
        let mut plans = Vec::with_capacity(active.len());
        let mut claims: Vec<Vec<(usize, f64)>> = Vec::with_capacity(active.len());
        for &m in &active {
            let covered = coverage_set(self.state.uavs[m], &self.state.devices, radius);
            let (picked, beta, violation, alphas) = if covered.is_empty() {
                (Vec::new(), None, 0.0, Vec::new())
            } else {
                let alphas = self.fitness_of(m, &covered)?;
                match self.cfg.orchestrator.selection {
                    Selection::Adaptive => {
                        let (beta, viol) = self.adaptive_choice(m, &covered, &alphas)?;
                        (select_with_fallback(&covered, &alphas, beta), Some(beta), viol, alphas)
                    }
                    Selection::Random => {
                        let s = StreamKey::new(seed, "random-selection").child(g as u64).child(m as u64);
                        (random_subset(&covered, s), None, 0.0, alphas)
                    }
                    _ => {
                        let beta = self.cfg.orchestrator.threshold;
                        (select_with_fallback(&covered, &alphas, beta), Some(beta), 0.0, alphas)
                    }
                }
            };
            let claim: Vec<(usize, f64)> =
                picked.iter().map(|n| (*n, covered.iter().position(|c| c == n).map_or(0.0, |i| alphas[i]))).collect();
            claims.push(claim);
            plans.push(UavPlan { uav: m, covered, selected: picked, beta, violation, solution: None, solves: 0 });
        }
        let resolved = resolve_overlaps(&claims);

        // Selection and allocation per UAV.
        let allocations = map_range(exec, plans.len(), |i| self.allocate(plans[i].uav, resolved[i].clone()));
        for (plan, alloc) in plans.iter_mut().zip(allocations) {
            let (sel, sol, solves) = alloc?;
            plan.selected = sel;
            plan.solution = sol;
            plan.solves = solves;
        }

        // Broadcast of the global model.
        let agg_pos = self.state.uavs[aggregator];
        let p_u2u_agg = self.state.uav_profiles[aggregator].p_u2u;
        let channel = self.world.channel;
        let mut b_uavs = Vec::with_capacity(plans.len());
        for plan in &plans {
            let m = plan.uav;
            let prof = &self.state.uav_profiles[m];
            let u2u = if m == aggregator {
                0.0
            } else {
                link_rate(
                    prof.b_u2u,
                    p_u2u_agg,
                    agg_pos.distance_to(&self.state.uavs[m]),
                    channel.alpha_u2u,
                    channel.n0,
                )?
            };
            let mut rates = Vec::with_capacity(plan.selected.len());
            if let Some(sol) = &plan.solution {
                for (i, &n) in plan.selected.iter().enumerate() {
                    let d = distance(self.state.devices[n], self.state.uavs[m]);
                    rates.push(link_rate(sol.b_u2d[i], prof.p_u2d, d, channel.alpha_u2d, channel.n0)?);
                }
            }
            b_uavs.push(BroadcastUav {
                u2u_rate_from_agg: u2u,
                u2d_rates: rates,
                p_u2d: prof.p_u2d,
                p_hover: prof.p_hover,
            });
        }
        let agg_index = plans.iter().position(|p| p.uav == aggregator).expect("aggregator is active");
        let b_input = BroadcastInput { aggregator: agg_index, uavs: b_uavs, p_u2u_agg, i_g: self.cfg.cost.model_bits };
        let broadcast = broadcast_costs(&b_input)?;
        let shares = broadcast_shares(&b_input, &broadcast)?;
        let mut exhausted: Vec<usize> = Vec::new();
        for (plan, share) in plans.iter().zip(&shares) {
            let b = &mut self.state.uav_profiles[plan.uav].battery;
            *b -= share;
            if *b < 0.0 {
                *b = 0.0;
                exhausted.push(plan.uav);
            }
        }

        // Edge rounds with the battery look-ahead.
        let batt_start: Vec<f64> = plans.iter().map(|p| self.state.uav_profiles[p.uav].battery).collect();
        let mut used = vec![0.0; plans.len()];
        let mut hist = vec![0.0f64; plans.len()];
        let mut uav_costs: Vec<UavRoundCosts> =
            plans.iter().map(|p| UavRoundCosts { uav: p.uav, ..Default::default() }).collect();
        let mut uav_models: Vec<ModelParams> = vec![self.state.global_model.clone(); plans.len()];
        let mut flagged: Vec<usize> = Vec::new();
        let k_max = self.cfg.cost.k_max;
        let mut k_g = k_max;
        let mut phi = false;
        let jobs: Vec<(usize, usize, usize)> = plans
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.selected.iter().enumerate().map(move |(j, &n)| (i, j, n)))
            .collect();
        let sgd_stream = StreamKey::new(seed, "sgd").child(g as u64);
        for k in 1..=k_max {
            let trained = map_indexed(exec, &jobs, |_, &(i, _, n)| {
                let h = plans[i].solution.as_ref().map_or(1, |s| s.h_star);
                let tc = TrainConfig {
                    eta: self.cfg.learner.eta,
                    h,
                    batch_fraction: self.cfg.cost.device.batch_fraction,
                    seed: sgd_stream.child(k as u64).child(n as u64).raw(),
                };
                local_sgd(&uav_models[i], &self.world.datasets[n], &tc)
            });
            let trained = trained.into_iter().collect::<Result<Vec<_>>>()?;
            for (i, plan) in plans.iter().enumerate() {
                let Some(sol) = &plan.solution else {
                    uav_costs[i].rounds.push(EdgeRoundCost::default());
                    continue;
                };
                let mine: Vec<usize> = (0..jobs.len()).filter(|&q| jobs[q].0 == i).collect();
                let models: Vec<&ModelParams> = mine.iter().map(|&q| &trained[q]).collect();
                let weights: Vec<f64> = mine.iter().map(|&q| self.world.datasets[jobs[q].2].len() as f64).collect();
                let mut w = fedavg(&models, &weights)?;
                w.version.g = g;
                w.version.k = k;
                uav_models[i] = w;
                let sel: Vec<(DeviceProfile, f64)> =
                    self.selected_devices(plan.uav, &plan.selected).iter().map(|s| (s.profile, s.dist)).collect();
                let prof = self.state.uav_profiles[plan.uav];
                let cost = edge_round_cost(&sel, sol.h_star, &sol.b_d2u, &sol.b_u2d, &prof, &channel)?;
                let e = cost.e_uav;
                uav_costs[i].rounds.push(cost);
                let b = &mut self.state.uav_profiles[plan.uav].battery;
                *b -= e;
                if *b < 0.0 {
                    *b = 0.0;
                    if !exhausted.contains(&plan.uav) {
                        exhausted.push(plan.uav);
                    }
                }
                used[i] += e;
                hist[i] = hist[i].max(e);
                if energy_check(used[i], hist[i], batt_start[i]).disconnect_flag {
                    flagged.push(plan.uav);
                }
            }
            for (&(_, _, n), model) in jobs.iter().zip(&trained) {
                self.state.device_models[n] = model.clone();
            }
            phi = !flagged.is_empty() || !exhausted.is_empty();
            if periodic_global_aggregation(k, k_max, phi) {
                k_g = edge_iterations(phi, k, k_max);
                break;
            }
        }

        // Global aggregation at the elected UAV.
        let contributing: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].solution.is_some()).collect();
        let prev_global = self.state.global_model.clone();
        if !contributing.is_empty() {
            let models: Vec<&ModelParams> = contributing.iter().map(|&i| &uav_models[i]).collect();
            let weights: Vec<f64> = contributing
                .iter()
                .map(|&i| plans[i].selected.iter().map(|&n| self.world.datasets[n].len() as f64).sum())
                .collect();
            let mut w = fedavg(&models, &weights)?;
            w.version.g = g;
            w.version.k = k_g;
            self.state.global_model = w;
        }
        for &i in &contributing {
            self.state.uav_metrics[plans[i].uav] = eval_metrics(&uav_models[i], &self.world.reward_probe)?;
        }

        // Upload to the aggregator, dropouts, repositioning and election.
        let mut t_e2g = vec![0.0; plans.len()];
        for (i, plan) in plans.iter().enumerate() {
            let m = plan.uav;
            if m == aggregator {
                continue;
            }
            let prof = &self.state.uav_profiles[m];
            let r = link_rate(
                prof.b_u2u,
                prof.p_u2u,
                self.state.uavs[m].distance_to(&agg_pos),
                channel.alpha_u2u,
                channel.n0,
            )?;
            t_e2g[i] = transfer_time(prof.i_u2u, r, "U2U")?;
        }
        let mut removed: Vec<usize> = flagged.clone();
        removed.extend(exhausted.iter().copied());
        removed.sort_unstable();
        removed.dedup();
        let survivors = handle_dropout(&active, &removed);
        for &m in &removed {
            self.dropouts.push(DropoutEvent { g, uav: m });
        }
        let coverage_post_drop = union_coverage(&self.state.uavs, &survivors, &self.state.devices, radius);
        let mut moves = Vec::new();
        let mut flown = vec![0.0; self.state.uavs.len()];
        let mut next_aggregator = aggregator;
        if !survivors.is_empty() {
            let out = match self.cfg.orchestrator.redeploy {
                Redeploy::TwoStageGreedy => {
                    let budgets: Vec<f64> = self
                        .state
                        .uav_profiles
                        .iter()
                        .map(|p| p.battery * self.cfg.orchestrator.move_budget_fraction)
                        .collect();
                    Some(redeploy_and_select(
                        &self.state.uavs,
                        &survivors,
                        &self.state.devices,
                        radius,
                        self.world.field,
                        &self.state.uav_profiles,
                        &budgets,
                        &self.cfg.p3,
                    )?)
                }
                Redeploy::DirectDrop => None,
            };
            match out {
                Some(r) => {
                    self.state.uavs = r.positions;
                    flown = r.distance;
                    moves = r.moves;
                    next_aggregator = r.choice.uav;
                }
                None => next_aggregator = elect_aggregator(&self.state.uavs, &survivors)?.uav,
            }
        }
        let coverage_post_redeploy = union_coverage(&self.state.uavs, &survivors, &self.state.devices, radius);
        for (i, plan) in plans.iter().enumerate() {
            let m = plan.uav;
            let prof = self.state.uav_profiles[m];
            let rc = relocation_costs_for_distance(flown[m], &prof, t_e2g[i]);
            uav_costs[i].t_delay = rc.t_delay;
            uav_costs[i].e_delay = rc.e_delay;
            uav_costs[i].finish_edge();
            let b = &mut self.state.uav_profiles[m].battery;
            *b = (*b - rc.e_delay).max(0.0);
        }
        let mut costs = CostBreakdown { uavs: uav_costs, broadcast, t_total: 0.0, e_total: 0.0 };
        costs.finish();

        let metrics = eval_metrics(&self.state.global_model, &self.world.test_set)?;
        let is_converged = converged(&self.state.global_model, &prev_global, self.cfg.orchestrator.delta)?;

        // Device mobility for the next round.
        if !survivors.is_empty() {
            let positions: Vec<UavPos> = survivors.iter().map(|&m| self.state.uavs[m]).collect();
            let mobility = MobilityModel { xi: self.cfg.net.xi, rng_stream: StreamKey::new(seed, "mobility") };
            self.state.devices =
                move_devices(&self.state.devices, &positions, radius, self.world.field, &mobility, g as u64);
        }

        let log = RoundLog {
            g,
            k_g,
            phi,
            aggregator,
            next_aggregator,
            accuracy: metrics.accuracy,
            loss: metrics.loss,
            t_total: costs.t_total,
            e_total: costs.e_total,
            uav_ids: plans.iter().map(|p| p.uav).collect(),
            costs,
            coverage_sizes: plans.iter().map(|p| p.covered.len()).collect(),
            selection_sizes: plans.iter().map(|p| p.selected.len()).collect(),
            selections: plans.iter().map(|p| p.selected.clone()).collect(),
            betas: plans.iter().map(|p| p.beta).collect(),
            violations: plans.iter().map(|p| p.violation).collect(),
            alpha_tilde: plans.iter().map(|p| self.agent(p.uav).map_or(0.0, |a| a.alpha_tilde)).collect(),
            h_star: plans.iter().map(|p| p.solution.as_ref().map_or(0, |s| s.h_star)).collect(),
            b_d2u: plans.iter().map(|p| p.solution.as_ref().map_or_else(Vec::new, |s| s.b_d2u.clone())).collect(),
            b_u2d: plans.iter().map(|p| p.solution.as_ref().map_or_else(Vec::new, |s| s.b_u2d.clone())).collect(),
            p1_solves: plans.iter().map(|p| p.solves).collect(),
            dropouts: removed,
            batteries: self.state.uav_profiles.iter().map(|p| p.battery).collect(),
            coverage_post_drop,
            coverage_post_redeploy,
            moves,
            uav_positions,
            device_positions,
            converged: is_converged,
        };
        self.logs.push(log);
        self.state.g = g;
        self.state.active = survivors;
        self.state.aggregator = next_aggregator;
        self.status = if self.state.active.is_empty() {
            RunStatus::FleetExhausted
        } else if is_converged {
            RunStatus::Converged
        } else {
            RunStatus::MaxRounds
        };
        Ok(self.status == RunStatus::MaxRounds)
    }

    /// Summary of the rounds run so far.
    pub fn summary(&self) -> RunSummary {
        let last = self.logs.last();
        RunSummary {
            status: self.status,
            rounds: self.logs.len() as u32,
            final_accuracy: last.map_or(0.0, |l| l.accuracy),
            final_loss: last.map_or(0.0, |l| l.loss),
            total_t: self.logs.iter().map(|l| l.t_total).sum(),
            total_e: self.logs.iter().map(|l| l.e_total).sum(),
            dropouts: self.dropouts.clone(),
            logs: self.logs.clone(),
        }
    }

    /// Runs until convergence, fleet exhaustion or the round cap.
    pub fn run_to_end(mut self) -> Result<RunSummary> {
        for _ in 0..self.cfg.orchestrator.max_rounds {
            if !self.step()? {
                break;
            }
        }
        Ok(self.summary())
    }
}

/// Runs a whole simulation.
pub fn run(cfg: &SimConfig) -> Result<RunSummary> {
    Simulator::new(cfg.clone())?.run_to_end()
}
