//! Delay and energy bookkeeping for devices, UAVs and whole global rounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{link_rate, ChannelParams, UavPos};

/// Compute and radio parameters of one IoT device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// CPU frequency, Hz.
    pub f: f64,
    /// CPU cycles needed per training sample.
    pub c: f64,
    /// Minibatch fraction of the local dataset.
    pub phi: f64,
    /// Effective switched capacitance of the chipset.
    pub theta: f64,
    /// Fixed per-iteration overhead, s.
    pub t_fix: f64,
    /// Upload transmit power, W.
    pub p_d2u: f64,
    /// Number of local training samples.
    pub dataset_size: usize,
    /// Size of the uploaded model, bits.
    pub i_d2u: f64,
}

impl DeviceProfile {
    /// Checks the profile invariants.
    pub fn validate(&self) -> Result<()> {
        let ok = self.f > 0.0
            && self.c > 0.0
            && self.phi > 0.0
            && self.phi <= 1.0
            && self.theta > 0.0
            && self.t_fix >= 0.0
            && self.p_d2u > 0.0
            && self.dataset_size >= 1
            && self.i_d2u > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid device profile {self:?}")))
        }
    }
}

/// Power, mobility, battery and spectrum parameters of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavProfile {
    /// Hovering power, W.
    pub p_hover: f64,
    /// Flying power, W.
    pub p_move: f64,
    /// Cruise speed, m/s.
    pub speed: f64,
    /// Broadcast power towards devices, W.
    pub p_u2d: f64,
    /// Transmit power towards other UAVs, W.
    pub p_u2u: f64,
    /// Remaining battery, J.
    pub battery: f64,
    /// Upload bandwidth shared by the covered devices, Hz.
    pub b_d2u_total: f64,
    /// Broadcast bandwidth shared by the covered devices, Hz.
    pub b_u2d_total: f64,
    /// Bandwidth of the UAV-to-UAV link, Hz.
    pub b_u2u: f64,
    /// Size of the model broadcast to devices, bits.
    pub i_u2d: f64,
    /// Size of the model sent to the aggregator, bits.
    pub i_u2u: f64,
}

/// Delay and energy of one device in one edge round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceCosts {
    pub t_cmp: f64,
    pub e_cmp: f64,
    pub t_d2u: f64,
    pub t_u2d: f64,
    pub t_com: f64,
    pub e_com: f64,
    pub t_dev: f64,
    pub e_dev: f64,
}

/// Outcome of the battery look-ahead after one edge round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyCheck {
    /// Energy consumed in the round just finished, J.
    pub used: f64,
    /// Largest per-round energy seen so far in this global round, J.
    pub projected_next: f64,
    /// Battery left, J.
    pub remaining: f64,
    /// Whether the UAV would run dry during the next edge round.
    pub disconnect_flag: bool,
}

/// Time per local SGD iteration, s.
pub fn t_unit(p: &DeviceProfile) -> f64 {
    p.t_fix + p.phi * p.c * p.dataset_size as f64 / p.f
}

/// Compute energy of `h` local iterations, J.
pub fn e_cmp(p: &DeviceProfile, h: u32) -> Result<f64> {
    if h == 0 {
        return Err(Error::Domain("local iteration count must be at least 1".into()));
    }
    Ok(h as f64 * p.f * p.f * p.phi * p.c * p.dataset_size as f64 * p.theta / 2.0)
}

/// Device costs given already computed upload and broadcast rates.
pub fn device_costs_from_rates(p: &DeviceProfile, h: u32, r_d2u: f64, r_u2d: f64, i_u2d: f64) -> Result<DeviceCosts> {
    let t_d2u = transfer_time(p.i_d2u, r_d2u, "D2U")?;
    let t_u2d = transfer_time(i_u2d, r_u2d, "U2D")?;
    let t_cmp = h as f64 * t_unit(p);
    let e_cmp = e_cmp(p, h)?;
    let e_com = t_d2u * p.p_d2u;
    Ok(DeviceCosts {
        t_cmp,
        e_cmp,
        t_d2u,
        t_u2d,
        t_com: t_d2u + t_u2d,
        e_com,
        t_dev: t_cmp + t_d2u + t_u2d,
        e_dev: e_cmp + e_com,
    })
}

/// Time to push `bits` over a link of rate `rate`; zero-size transfers take no time.
pub fn transfer_time(bits: f64, rate: f64, link: &'static str) -> Result<f64> {
    if bits == 0.0 {
        return Ok(0.0);
    }
    if !(rate > 0.0) {
        return Err(Error::ZeroRate(link));
    }
    Ok(bits / rate)
}

/// Device delay and energy for one edge round with the given bandwidth shares.
pub fn device_round_costs(
    p: &DeviceProfile,
    h: u32,
    b_d2u: f64,
    b_u2d: f64,
    dist: f64,
    channel: &ChannelParams,
    uav: &UavProfile,
) -> Result<DeviceCosts> {
    let r_d2u = link_rate(b_d2u, p.p_d2u, dist, channel.alpha_d2u, channel.n0)?;
    let r_u2d = link_rate(b_u2d, uav.p_u2d, dist, channel.alpha_u2d, channel.n0)?;
    device_costs_from_rates(p, h, r_d2u, r_u2d, uav.i_u2d)
}

/// UAV energy for one edge round: hovering plus broadcasting.
pub fn uav_round_energy(hover_time: f64, t_u2d: f64, uav: &UavProfile) -> f64 {
    hover_time * uav.p_hover + t_u2d * uav.p_u2d
}

/// Battery look-ahead: disconnect iff `used <= remaining <= used + history_max`.
pub fn energy_check(used: f64, history_max: f64, remaining: f64) -> EnergyCheck {
    EnergyCheck {
        used,
        projected_next: history_max,
        remaining,
        disconnect_flag: used <= remaining && remaining <= used + history_max,
    }
}

/// Number of edge rounds in a global round: `k_bar` after a disconnect flag, else `k_max`.
pub fn edge_iterations(phi_flag: bool, k_bar: u32, k_max: u32) -> u32 {
    if phi_flag {
        k_bar
    } else {
        k_max
    }
}

/// Whether the global aggregation must happen after edge round `k`.
pub fn periodic_global_aggregation(k: u32, k_max: u32, phi_flag: bool) -> bool {
    phi_flag || k >= k_max
}

/// Edge totals of one UAV over a global round.
///
/// `device_e[k]` holds the device energies of round `k`.
pub fn edge_totals(per_round_hover: &[f64], per_round_uav_e: &[f64], device_e: &[Vec<f64>]) -> (f64, f64) {
    let t: f64 = per_round_hover.iter().sum();
    let e = per_round_uav_e.iter().zip(device_e).map(|(u, d)| u + d.iter().sum::<f64>()).sum();
    (t, e)
}

/// Flight and hand-off costs of moving a UAV.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RelocationCosts {
    /// Horizontal flight distance, m.
    pub distance: f64,
    /// Flight time, s.
    pub move_time: f64,
    /// Flight energy, J.
    pub move_energy: f64,
    /// Hand-off plus flight time, s.
    pub t_delay: f64,
    /// Hovering energy during hand-off plus flight energy, J.
    pub e_delay: f64,
}

/// Costs of sending the intermediate model upstream for `t_e2g` seconds, then flying `old -> new`.
pub fn relocation_costs(old: UavPos, new: UavPos, uav: &UavProfile, t_e2g: f64) -> RelocationCosts {
    relocation_costs_for_distance(old.horizontal_to(&new), uav, t_e2g)
}

/// [`relocation_costs`] for a known flight distance.
pub fn relocation_costs_for_distance(distance: f64, uav: &UavProfile, t_e2g: f64) -> RelocationCosts {
    let move_time = distance / uav.speed;
    let move_energy = uav.p_move * move_time;
    RelocationCosts {
        distance,
        move_time,
        move_energy,
        t_delay: t_e2g + move_time,
        e_delay: t_e2g * uav.p_hover + move_energy,
    }
}

/// One UAV's view of the global model broadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastUav {
    /// Rate of the link from the aggregator to this UAV, ignored for the aggregator itself.
    pub u2u_rate_from_agg: f64,
    /// Broadcast rates to each selected device.
    pub u2d_rates: Vec<f64>,
    pub p_u2d: f64,
    pub p_hover: f64,
}

/// Inputs of the broadcast cost computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastInput {
    /// Index into `uavs` of the global aggregator.
    pub aggregator: usize,
    pub uavs: Vec<BroadcastUav>,
    /// Transmit power of the aggregator on UAV links, W.
    pub p_u2u_agg: f64,
    /// Size of the global model, bits.
    pub i_g: f64,
}

/// Broadcast delay, broadcast energy and waiting energy of a global round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BroadcastCosts {
    pub t_broad: f64,
    pub e_broad: f64,
    pub e_bwait: f64,
}

/// Costs of relaying the global model to every UAV and on to its devices.
pub fn broadcast_costs(input: &BroadcastInput) -> Result<BroadcastCosts> {
    if input.aggregator >= input.uavs.len() {
        return Err(Error::Domain(format!(
            "aggregator index {} outside {} active UAVs",
            input.aggregator,
            input.uavs.len()
        )));
    }
    let mut t_broad = 0.0f64;
    let mut t_u2u_max = 0.0f64;
    let mut e_u2d = 0.0;
    for (m, u) in input.uavs.iter().enumerate() {
        let t_u2u = if m == input.aggregator { 0.0 } else { transfer_time(input.i_g, u.u2u_rate_from_agg, "U2U")? };
        let mut t_dev = 0.0f64;
        for &r in &u.u2d_rates {
            t_dev = t_dev.max(transfer_time(input.i_g, r, "U2D")?);
        }
        t_broad = t_broad.max(t_u2u + t_dev);
        t_u2u_max = t_u2u_max.max(t_u2u);
        e_u2d += t_dev * u.p_u2d;
    }
    let e_broad = t_u2u_max * input.p_u2u_agg + e_u2d;
    let e_bwait = input.uavs.iter().map(|u| t_broad * u.p_hover).sum();
    Ok(BroadcastCosts { t_broad, e_broad, e_bwait })
}

/// Cost of one edge round at one UAV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeRoundCost {
    /// Hover time: the slowest selected device, s.
    pub t_hover: f64,
    /// Slowest broadcast to a selected device, s.
    pub t_u2d: f64,
    /// UAV energy of the round, J.
    pub e_uav: f64,
    /// Per-device costs in selection order.
    pub devices: Vec<DeviceCosts>,
}

/// Costs of one UAV across a global round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UavRoundCosts {
    pub uav: usize,
    pub rounds: Vec<EdgeRoundCost>,
    pub t_edge: f64,
    pub e_edge: f64,
    pub t_delay: f64,
    pub e_delay: f64,
}

impl UavRoundCosts {
    /// Fills `t_edge` and `e_edge` from the recorded edge rounds.
    pub fn finish_edge(&mut self) {
        let hover: Vec<f64> = self.rounds.iter().map(|r| r.t_hover).collect();
        let uav_e: Vec<f64> = self.rounds.iter().map(|r| r.e_uav).collect();
        let dev_e: Vec<Vec<f64>> = self.rounds.iter().map(|r| r.devices.iter().map(|d| d.e_dev).collect()).collect();
        let (t, e) = edge_totals(&hover, &uav_e, &dev_e);
        self.t_edge = t;
        self.e_edge = e;
    }

    /// Total energy drawn from this UAV's battery, excluding broadcast terms.
    pub fn battery_draw(&self) -> f64 {
        self.rounds.iter().map(|r| r.e_uav).sum::<f64>() + self.e_delay
    }
}

/// Every delay and energy term of a global round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub uavs: Vec<UavRoundCosts>,
    pub broadcast: BroadcastCosts,
    pub t_total: f64,
    pub e_total: f64,
}

impl CostBreakdown {
    /// Recomputes and stores the totals.
    pub fn finish(&mut self) {
        let (t, e) = global_totals(self);
        self.t_total = t;
        self.e_total = e;
    }
}

/// Round delay and energy from their components.
pub fn global_totals(parts: &CostBreakdown) -> (f64, f64) {
    let slowest = parts.uavs.iter().map(|u| u.t_edge + u.t_delay).fold(0.0, f64::max);
    let e_sum: f64 = parts.uavs.iter().map(|u| u.e_edge + u.e_delay).sum();
    (parts.broadcast.t_broad + slowest, parts.broadcast.e_broad + parts.broadcast.e_bwait + e_sum)
}

/// Weighted system cost `lambda4 E + lambda5 T`.
pub fn weighted_cost(lambda4: f64, lambda5: f64, e: f64, t: f64) -> f64 {
    lambda4 * e + lambda5 * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> DeviceProfile {
        DeviceProfile {
            f: 100.0,
            c: 1.0,
            phi: 1.0,
            theta: 1e-28,
            t_fix: 0.0,
            p_d2u: 0.5,
            dataset_size: 100,
            i_d2u: 1e6,
        }
    }

    fn uav() -> UavProfile {
        UavProfile {
            p_hover: 100.0,
            p_move: 160.0,
            speed: 16.0,
            p_u2d: 1.0,
            p_u2u: 1.0,
            battery: 1e5,
            b_d2u_total: 1e7,
            b_u2d_total: 1e7,
            b_u2u: 2e6,
            i_u2d: 1e6,
            i_u2u: 1e6,
        }
    }

    #[test]
    fn t_unit_examples() {
        assert_eq!(t_unit(&profile()), 1.0);
        let p = DeviceProfile { t_fix: 0.01, phi: 0.5, c: 50.0, dataset_size: 1000, f: 1e9, ..profile() };
        assert!((t_unit(&p) - 0.010025).abs() < 1e-15);
        let p = DeviceProfile { t_fix: 0.2, phi: 1e-300, ..profile() };
        assert!((t_unit(&p) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn e_cmp_examples() {
        let p = DeviceProfile { f: 1e9, c: 100.0, dataset_size: 100, ..profile() };
        assert!((e_cmp(&p, 5).unwrap() - 2.5e-6).abs() < 1e-18);
        assert!(e_cmp(&p, 0).is_err());
        let q = DeviceProfile { f: 2e9, ..p };
        assert!((e_cmp(&q, 5).unwrap() / e_cmp(&p, 5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn device_cost_examples() {
        let c = device_costs_from_rates(&profile(), 1, 1e6, 1e6, 0.0).unwrap();
        assert!((c.e_com - 0.5).abs() < 1e-15);
        let p = DeviceProfile { t_fix: 0.0, phi: 1e-300, i_d2u: 0.0, ..profile() };
        let c = device_costs_from_rates(&p, 1, 0.0, 0.0, 0.0).unwrap();
        assert!(c.t_dev.abs() < 1e-290);
        assert_eq!(device_costs_from_rates(&profile(), 1, 0.0, 1.0, 1.0), Err(Error::ZeroRate("D2U")));
    }

    #[test]
    fn uav_energy_examples() {
        let u = uav();
        assert_eq!(uav_round_energy(10.0, 1.0, &u), 1001.0);
        assert_eq!(uav_round_energy(0.0, 0.0, &u), 0.0);
        assert_eq!(uav_round_energy(20.0, 2.0, &u), 2002.0);
    }

    #[test]
    fn energy_check_examples() {
        assert!(energy_check(50.0, 20.0, 60.0).disconnect_flag);
        assert!(!energy_check(50.0, 20.0, 80.0).disconnect_flag);
        assert!(!energy_check(50.0, 20.0, 40.0).disconnect_flag);
    }

    #[test]
    fn edge_iteration_examples() {
        assert_eq!(edge_iterations(true, 4, 10), 4);
        assert_eq!(edge_iterations(false, 4, 10), 10);
        assert_eq!(edge_iterations(true, 10, 10), 10);
        assert!(periodic_global_aggregation(10, 10, false));
        assert!(!periodic_global_aggregation(3, 10, false));
        assert!(periodic_global_aggregation(3, 10, true));
    }

    #[test]
    fn edge_total_examples() {
        assert_eq!(edge_totals(&[3.0], &[90.0], &[vec![10.0]]), (3.0, 100.0));
        assert_eq!(edge_totals(&[3.0, 3.0], &[90.0, 90.0], &[vec![4.0, 6.0], vec![10.0]]), (6.0, 200.0));
    }

    #[test]
    fn relocation_examples() {
        let u = uav();
        let a = UavPos { x: 0.0, y: 0.0, altitude: 150.0 };
        let r = relocation_costs(a, a, &u, 2.0);
        assert_eq!((r.t_delay, r.move_energy, r.e_delay), (2.0, 0.0, 200.0));
        let b = UavPos { x: 320.0, ..a };
        let r = relocation_costs(a, b, &u, 0.0);
        assert_eq!((r.move_time, r.move_energy), (20.0, 3200.0));
        let rate = link_rate(2e6, 1.0, 1000.0, 2.2, 1e-20).unwrap();
        let t_e2g = transfer_time(u.i_u2u, rate, "U2U").unwrap();
        let r = relocation_costs(a, b, &u, t_e2g);
        assert!((r.t_delay - (u.i_u2u / rate + 20.0)).abs() < 1e-12);
    }

    #[test]
    fn broadcast_examples() {
        let one = BroadcastInput {
            aggregator: 0,
            uavs: vec![BroadcastUav { u2u_rate_from_agg: 0.0, u2d_rates: vec![1e6, 5e5], p_u2d: 1.0, p_hover: 100.0 }],
            p_u2u_agg: 1.0,
            i_g: 1e6,
        };
        let b = broadcast_costs(&one).unwrap();
        assert_eq!(b.t_broad, 2.0);
        assert_eq!(b.e_broad, 2.0);
        assert_eq!(b.e_bwait, 200.0);

        let two = BroadcastInput {
            aggregator: 0,
            uavs: vec![
                BroadcastUav { u2u_rate_from_agg: 0.0, u2d_rates: vec![1e6], p_u2d: 1.0, p_hover: 100.0 },
                BroadcastUav { u2u_rate_from_agg: 1e6, u2d_rates: vec![1e6], p_u2d: 1.0, p_hover: 100.0 },
            ],
            p_u2u_agg: 0.5,
            i_g: 1e6,
        };
        let b = broadcast_costs(&two).unwrap();
        // Peer path: 1 s relay plus 1 s broadcast; own devices: 1 s.
        assert_eq!(b.t_broad, 2.0);
        assert_eq!(b.e_broad, 1.0 * 0.5 + 1.0 + 1.0);
        assert_eq!(b.e_bwait, 400.0);
        assert!(broadcast_costs(&BroadcastInput { aggregator: 2, ..two }).is_err());

        let three = BroadcastInput {
            aggregator: 0,
            uavs: vec![BroadcastUav { u2u_rate_from_agg: 1e6, u2d_rates: vec![1e6], p_u2d: 1.0, p_hover: 100.0 }; 3],
            p_u2u_agg: 1.0,
            i_g: 1e6,
        };
        let b = broadcast_costs(&three).unwrap();
        assert_eq!(b.t_broad, 2.0);
        assert_eq!(b.e_bwait, 600.0);
    }

    #[test]
    fn weighted_cost_is_mean_at_half_weights() {
        assert_eq!(weighted_cost(0.5, 0.5, 300.0, 100.0), 200.0);
    }
}
