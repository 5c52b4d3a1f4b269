//! Simulation configuration with defaults for every parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::learner::Scheme;
use crate::net::{dbm_per_hz_to_watts, ChannelParams};
use crate::p1::AlmConfig;
use crate::p2::{FitnessWeights, Td3Config};
use crate::p3::SearchConfig;

fn fail<T>(path: &str, msg: impl Into<String>) -> Result<T> {
    Err(Error::Config { path: path.into(), msg: msg.into() })
}

fn check_range(path: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
        return fail(path, format!("expected 0 < low <= high, got {r:?}"));
    }
    Ok(())
}

fn check_positive(path: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return fail(path, format!("must be positive, got {v}"));
    }
    Ok(())
}

/// Field, fleet and channel settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Side of the square field, m.
    pub field_size: f64,
    /// UAV altitude, m.
    pub altitude: f64,
    /// Coverage radius, m.
    pub radius: f64,
    pub n_uavs: usize,
    pub n_devices: usize,
    /// Per-round device relocation probability.
    pub xi: f64,
    pub alpha_d2u: f64,
    pub alpha_u2d: f64,
    pub alpha_u2u: f64,
    /// Noise density, dBm/Hz.
    pub n0_dbm_per_hz: f64,
    /// Explicit initial UAV ground positions; empty places them on a grid.
    pub uav_positions: Vec<[f64; 2]>,
}

impl Default for NetConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        NetConfig {
            field_size: 20_000.0,
            altitude: 150.0,
            radius: 5_000.0,
            n_uavs: 5,
            n_devices: 150,
            xi: 0.3,
            alpha_d2u: ch.alpha_d2u,
            alpha_u2d: ch.alpha_u2d,
            alpha_u2u: ch.alpha_u2u,
            n0_dbm_per_hz: -174.0,
            uav_positions: Vec::new(),
        }
    }
}

impl NetConfig {
    /// Channel parameters in SI units.
    pub fn channel(&self) -> ChannelParams {
        ChannelParams {
            alpha_d2u: self.alpha_d2u,
            alpha_u2d: self.alpha_u2d,
            alpha_u2u: self.alpha_u2u,
            n0: dbm_per_hz_to_watts(self.n0_dbm_per_hz),
        }
    }

    fn validate(&self) -> Result<()> {
        check_positive("net.field_size", self.field_size)?;
        check_positive("net.altitude", self.altitude)?;
        check_positive("net.radius", self.radius)?;
        if self.n_uavs == 0 {
            return fail("net.n_uavs", "must be at least 1");
        }
        if self.n_devices == 0 {
            return fail("net.n_devices", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return fail("net.xi", "must lie in [0, 1]");
        }
        check_positive("net.alpha_d2u", self.alpha_d2u)?;
        check_positive("net.alpha_u2d", self.alpha_u2d)?;
        check_positive("net.alpha_u2u", self.alpha_u2u)?;
        if !self.n0_dbm_per_hz.is_finite() {
            return fail("net.n0_dbm_per_hz", "must be finite");
        }
        if !self.uav_positions.is_empty() {
            if self.uav_positions.len() != self.n_uavs {
                return fail("net.uav_positions", "needs one entry per UAV");
            }
            let inside = |v: f64| (0.0..=self.field_size).contains(&v);
            if !self.uav_positions.iter().all(|p| inside(p[0]) && inside(p[1])) {
                return fail("net.uav_positions", "positions must lie inside the field");
            }
        }
        Ok(())
    }
}

/// Ranges from which device profiles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub freq_ghz: [f64; 2],
    pub cycles_per_bit: [f64; 2],
    /// Size of one training sample, bits.
    pub bits_per_sample: f64,
    pub p_d2u_mw: [f64; 2],
    pub theta: f64,
    pub t_fix: f64,
    /// Minibatch fraction of the local dataset.
    pub batch_fraction: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            freq_ghz: [1.0, 10.0],
            cycles_per_bit: [30.0, 100.0],
            bits_per_sample: 6272.0,
            p_d2u_mw: [200.0, 800.0],
            theta: 1e-28,
            t_fix: 0.01,
            batch_fraction: 0.1,
        }
    }
}

/// Ranges and constants from which UAV profiles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UavConfig {
    pub p_hover: f64,
    pub p_move: f64,
    pub speed: f64,
    pub p_u2u_mw: [f64; 2],
    pub p_u2d_mw: [f64; 2],
    pub bandwidth_mhz: [f64; 2],
    pub b_u2u_mhz: f64,
    /// Initial battery of every UAV, J.
    pub battery_j: f64,
    /// Per-UAV initial batteries overriding `battery_j`; empty uses `battery_j` for all.
    pub battery_j_per_uav: Vec<f64>,
}

impl Default for UavConfig {
    fn default() -> Self {
        UavConfig {
            p_hover: 100.0,
            p_move: 160.0,
            speed: 16.0,
            p_u2u_mw: [500.0, 1000.0],
            p_u2d_mw: [300.0, 1200.0],
            bandwidth_mhz: [20.0, 100.0],
            b_u2u_mhz: 2.0,
            battery_j: 2.0e5,
            battery_j_per_uav: Vec::new(),
        }
    }
}

/// Cost model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub device: DeviceConfig,
    pub uav: UavConfig,
    /// Size of every transferred model, bits.
    pub model_bits: f64,
    /// Maximum edge rounds per global round.
    pub k_max: u32,
    /// Dwell time bounding a device's per-round delay, s.
    pub t_stay: f64,
    /// Energy weight of the system cost.
    pub lambda4: f64,
    /// Delay weight of the system cost.
    pub lambda5: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            device: DeviceConfig::default(),
            uav: UavConfig::default(),
            model_bits: 698_880.0,
            k_max: 10,
            t_stay: 0.12,
            lambda4: 0.5,
            lambda5: 0.5,
        }
    }
}

impl CostConfig {
    fn validate(&self, n_uavs: usize) -> Result<()> {
        let d = &self.device;
        check_range("cost.device.freq_ghz", d.freq_ghz)?;
        check_range("cost.device.cycles_per_bit", d.cycles_per_bit)?;
        check_positive("cost.device.bits_per_sample", d.bits_per_sample)?;
        check_range("cost.device.p_d2u_mw", d.p_d2u_mw)?;
        check_positive("cost.device.theta", d.theta)?;
        if !(d.t_fix >= 0.0 && d.t_fix.is_finite()) {
            return fail("cost.device.t_fix", "must be non-negative");
        }
        if !(d.batch_fraction > 0.0 && d.batch_fraction <= 1.0) {
            return fail("cost.device.batch_fraction", "must lie in (0, 1]");
        }
        let u = &self.uav;
        check_positive("cost.uav.p_hover", u.p_hover)?;
        check_positive("cost.uav.p_move", u.p_move)?;
        check_positive("cost.uav.speed", u.speed)?;
        check_range("cost.uav.p_u2u_mw", u.p_u2u_mw)?;
        check_range("cost.uav.p_u2d_mw", u.p_u2d_mw)?;
        check_range("cost.uav.bandwidth_mhz", u.bandwidth_mhz)?;
        check_positive("cost.uav.b_u2u_mhz", u.b_u2u_mhz)?;
        check_positive("cost.uav.battery_j", u.battery_j)?;
        if !u.battery_j_per_uav.is_empty() {
            if u.battery_j_per_uav.len() != n_uavs {
                return fail("cost.uav.battery_j_per_uav", "needs one entry per UAV");
            }
            if u.battery_j_per_uav.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
                return fail("cost.uav.battery_j_per_uav", "batteries must be positive");
            }
        }
        check_positive("cost.model_bits", self.model_bits)?;
        if self.k_max == 0 {
            return fail("cost.k_max", "must be at least 1");
        }
        check_positive("cost.t_stay", self.t_stay)?;
        if !(0.0..=1.0).contains(&self.lambda4) {
            return fail("cost.lambda4", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda5) {
            return fail("cost.lambda5", "must lie in [0, 1]");
        }
        Ok(())
    }

    /// Initial battery of UAV `m`.
    pub fn battery_of(&self, m: usize) -> f64 {
        self.uav.battery_j_per_uav.get(m).copied().unwrap_or(self.uav.battery_j)
    }
}

/// Data and training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub scheme: Scheme,
    pub samples_per_device: usize,
    /// Hidden layer width; 0 trains plain softmax regression.
    pub hidden: usize,
    pub classes: usize,
    pub cluster_radius: f64,
    pub cluster_std: f64,
    /// Learning rate of local SGD.
    pub eta: f64,
    /// Samples per device used for model difference scores.
    pub probe_size: usize,
    /// Size of the balanced global test set.
    pub test_size: usize,
    /// Size of the test subset used for selection rewards.
    pub reward_probe_size: usize,
    /// Samples held by each UAV to train its personalized model.
    pub personal_samples: usize,
    pub personal_steps: u32,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            scheme: Scheme::A,
            samples_per_device: 64,
            hidden: 0,
            classes: 10,
            cluster_radius: 4.0,
            cluster_std: 0.5,
            eta: 0.3,
            probe_size: 16,
            test_size: 1000,
            reward_probe_size: 200,
            personal_samples: 50,
            personal_steps: 50,
        }
    }
}

impl LearnerConfig {
    fn validate(&self) -> Result<()> {
        if self.samples_per_device == 0 {
            return fail("learner.samples_per_device", "must be at least 1");
        }
        if !(2..=10).contains(&self.classes) {
            return fail("learner.classes", "must lie in 2..=10");
        }
        check_positive("learner.cluster_radius", self.cluster_radius)?;
        if !(self.cluster_std >= 0.0 && self.cluster_std.is_finite()) {
            return fail("learner.cluster_std", "must be non-negative");
        }
        check_positive("learner.eta", self.eta)?;
        if self.probe_size == 0 {
            return fail("learner.probe_size", "must be at least 1");
        }
        if self.test_size == 0 {
            return fail("learner.test_size", "must be at least 1");
        }
        if self.reward_probe_size == 0 || self.reward_probe_size > self.test_size {
            return fail("learner.reward_probe_size", "must lie in 1..=test_size");
        }
        if self.personal_samples == 0 {
            return fail("learner.personal_samples", "must be at least 1");
        }
        Ok(())
    }
}

/// Device selection settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct P2Config {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Weight of the loss decrease in the reward.
    pub lambda6: f64,
    /// Weight of the accuracy increase in the reward.
    pub lambda7: f64,
    /// Device deadline, s; 0 uses `cost.t_stay`.
    pub t_max: f64,
    /// Learning-rate multiplier of the one-step reward probe.
    pub probe_lr_scale: f64,
    /// Critic updates run right after the warm-up transitions are collected.
    pub pretrain_updates: u32,
    pub td3: Td3Config,
}

impl Default for P2Config {
    fn default() -> Self {
        P2Config {
            lambda1: 0.6,
            lambda2: 0.2,
            lambda3: 0.2,
            lambda6: 0.5,
            lambda7: 0.5,
            t_max: 0.0,
            probe_lr_scale: 10.0,
            pretrain_updates: 200,
            td3: Td3Config::default(),
        }
    }
}

impl P2Config {
    /// Fitness weights of the adaptive strategy.
    pub fn weights(&self) -> FitnessWeights {
        FitnessWeights { lambda1: self.lambda1, lambda2: self.lambda2, lambda3: self.lambda3 }
    }

    fn validate(&self) -> Result<()> {
        self.weights().validate()?;
        if !(0.0..=1.0).contains(&self.lambda6) {
            return fail("p2.lambda6", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda7) {
            return fail("p2.lambda7", "must lie in [0, 1]");
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return fail("p2.t_max", "must be non-negative");
        }
        check_positive("p2.probe_lr_scale", self.probe_lr_scale)?;
        self.td3.validate()
    }
}

/// Device selection strategy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Fitness threshold picked per UAV and round by a TD3 agent.
    #[default]
    Adaptive,
    /// A uniformly random subset of the covered devices.
    Random,
    /// Fixed threshold on the distance score alone.
    DistanceOnly,
    /// Fixed threshold on the similarity score alone.
    SimilarityOnly,
    /// Fixed threshold on the full fitness score.
    Fixed,
}

/// What happens to the fleet after UAVs drop out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Redeploy {
    /// Greedy repositioning every round.
    #[default]
    TwoStageGreedy,
    /// UAVs never move.
    DirectDrop,
}

/// Round engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    pub selection: Selection,
    pub redeploy: Redeploy,
    /// Threshold of the fixed, distance-only and similarity-only strategies.
    pub threshold: f64,
    /// Convergence tolerance on consecutive global models.
    pub delta: f64,
    pub max_rounds: u32,
    /// Cap on selection and allocation alternations per round.
    pub fixed_point_cap: u32,
    /// Fraction of the battery a UAV may spend flying in one round.
    pub move_budget_fraction: f64,
    pub exec: Exec,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            selection: Selection::Adaptive,
            redeploy: Redeploy::TwoStageGreedy,
            threshold: 0.55,
            delta: 1e-3,
            max_rounds: 50,
            fixed_point_cap: 5,
            move_budget_fraction: 0.1,
            exec: Exec::default(),
        }
    }
}

impl OrchestratorConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("orchestrator.threshold", "must lie in [0, 1]");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return fail("orchestrator.delta", "must be non-negative");
        }
        if self.fixed_point_cap == 0 {
            return fail("orchestrator.fixed_point_cap", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.move_budget_fraction) {
            return fail("orchestrator.move_budget_fraction", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub net: NetConfig,
    pub cost: CostConfig,
    pub learner: LearnerConfig,
    pub p1: AlmConfig,
    pub p2: P2Config,
    pub p3: SearchConfig,
    pub orchestrator: OrchestratorConfig,
}

impl SimConfig {
    /// Checks every section, reporting the first offending key path.
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.cost.validate(self.net.n_uavs)?;
        self.learner.validate()?;
        self.p1.validate()?;
        self.p2.validate()?;
        self.p3.validate()?;
        self.orchestrator.validate()
    }

    /// Deadline used by the selection reward.
    pub fn t_max(&self) -> f64 {
        if self.p2.t_max > 0.0 {
            self.p2.t_max
        } else {
            self.cost.t_stay
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!((c.net.n_uavs, c.net.n_devices, c.net.xi), (5, 150, 0.3));
        assert_eq!(c.cost.k_max, 10);
        assert_eq!((c.p3.chi1, c.p3.chi2), (8, 6));
    }

    #[test]
    fn bad_weights_report_their_path() {
        let mut c = SimConfig::default();
        c.p2.lambda1 = 0.5;
        match c.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "p2.lambda1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let r: std::result::Result<SimConfig, _> = serde_json::from_str(r#"{"net": {"bogus": 1}}"#);
        assert!(r.is_err());
    }

    #[test]
    fn battery_overrides() {
        let mut c = CostConfig::default();
        assert_eq!(c.battery_of(3), 2.0e5);
        c.uav.battery_j_per_uav = vec![1.0, 2.0];
        assert_eq!(c.battery_of(1), 2.0);
        assert!(c.validate(3).is_err());
    }
}
