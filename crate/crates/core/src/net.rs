//! Geometry, mobility, coverage and wireless link rates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Ground position of an IoT device, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevicePos {
    pub x: f64,
    pub y: f64,
}

/// Position of a UAV, in meters. All UAVs fly at the same altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UavPos {
    pub x: f64,
    pub y: f64,
    pub altitude: f64,
}

impl UavPos {
    /// Horizontal distance to another UAV.
    pub fn horizontal_to(&self, other: &UavPos) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Straight-line distance to another UAV.
    pub fn distance_to(&self, other: &UavPos) -> f64 {
        let dz = self.altitude - other.altitude;
        (self.horizontal_to(other).powi(2) + dz * dz).sqrt()
    }
}

/// Path-loss exponents per link direction and the noise spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub alpha_d2u: f64,
    pub alpha_u2d: f64,
    pub alpha_u2u: f64,
    /// Noise power spectral density, W/Hz.
    pub n0: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { alpha_d2u: 2.8, alpha_u2d: 2.8, alpha_u2u: 2.2, n0: dbm_per_hz_to_watts(-174.0) }
    }
}

impl ChannelParams {
    /// Checks that every exponent and the noise density are positive.
    pub fn validate(&self) -> Result<()> {
        let ok = [self.alpha_d2u, self.alpha_u2d, self.alpha_u2u, self.n0].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain("channel exponents and n0 must be positive".into()))
        }
    }
}

/// Converts a power density in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Device relocation model applied between global rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityModel {
    /// Probability that a device relocates before the next round.
    pub xi: f64,
    /// Root of the per-device random streams.
    pub rng_stream: StreamKey,
}

/// Rectangular square field `[0, size] x [0, size]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub size: f64,
}

impl Field {
    /// Whether a ground point lies inside the field.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.size).contains(&x) && (0.0..=self.size).contains(&y)
    }
}

/// Slant distance between a device on the ground and a UAV.
pub fn distance(device: DevicePos, uav: UavPos) -> f64 {
    let dx = device.x - uav.x;
    let dy = device.y - uav.y;
    (dx * dx + dy * dy + uav.altitude * uav.altitude).sqrt()
}

/// Ground-plane distance between a device and the point below a UAV.
pub fn horizontal_distance(device: DevicePos, uav: UavPos) -> f64 {
    (device.x - uav.x).hypot(device.y - uav.y)
}

/// Shannon rate `B log2(1 + p d^-alpha / (n0 B))` in bits/s.
pub fn link_rate(bandwidth: f64, tx_power: f64, dist: f64, alpha: f64, n0: f64) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::Domain(format!("link distance must be positive, got {dist}")));
    }
    if !(bandwidth >= 0.0) {
        return Err(Error::Domain(format!("bandwidth must be non-negative, got {bandwidth}")));
    }
    if bandwidth == 0.0 || tx_power <= 0.0 {
        return Ok(0.0);
    }
    let snr = tx_power * dist.powf(-alpha) / (n0 * bandwidth);
    Ok(bandwidth * snr.ln_1p() / std::f64::consts::LN_2)
}

/// Ids of devices whose horizontal distance to `uav` is at most `radius`.
pub fn coverage_set(uav: UavPos, devices: &[DevicePos], radius: f64) -> Vec<usize> {
    devices.iter().enumerate().filter(|(_, d)| horizontal_distance(**d, uav) <= radius).map(|(i, _)| i).collect()
}

/// Index into `uavs` of the UAV closest to `device` horizontally, lowest index on ties.
pub fn nearest_uav(device: DevicePos, uavs: &[UavPos]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, u) in uavs.iter().enumerate() {
        let d = horizontal_distance(device, *u);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

fn sample_in_disc<R: Rng>(rng: &mut R, cx: f64, cy: f64, radius: f64, field: Field) -> DevicePos {
    for _ in 0..256 {
        let r = radius * rng.random::<f64>().sqrt();
        let t = std::f64::consts::TAU * rng.random::<f64>();
        let (x, y) = (cx + r * t.cos(), cy + r * t.sin());
        if field.contains(x, y) {
            return DevicePos { x, y };
        }
    }
    DevicePos { x: cx.clamp(0.0, field.size), y: cy.clamp(0.0, field.size) }
}

/// Relocates devices for the round after `round`.
///
/// Each device draws from its own stream, so the result for one device does
/// not depend on the others. A relocating device lands uniformly inside the
/// disc of a uniformly chosen UAV other than its nearest one; with a single
/// UAV it lands anywhere inside that UAV's disc. Points outside the field are
/// rejected and redrawn.
pub fn move_devices(
    positions: &[DevicePos],
    uavs: &[UavPos],
    radius: f64,
    field: Field,
    mobility: &MobilityModel,
    round: u64,
) -> Vec<DevicePos> {
    let stream = mobility.rng_stream.child(round);
    positions
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if uavs.is_empty() {
                return p;
            }
            let mut rng = stream.child(i as u64).rng();
            if rng.random::<f64>() >= mobility.xi {
                return p;
            }
            let target = if uavs.len() == 1 {
                0
            } else {
                let own = nearest_uav(p, uavs).unwrap_or(0);
                let k = rng.random_range(0..uavs.len() - 1);
                if k >= own {
                    k + 1
                } else {
                    k
                }
            };
            let u = uavs[target];
            sample_in_disc(&mut rng, u.x, u.y, radius, field)
        })
        .collect()
}

/// `count` UAVs on a near-square grid with cells centered inside the field.
pub fn grid_uav_positions(count: usize, field: Field, altitude: f64) -> Vec<UavPos> {
    if count == 0 {
        return Vec::new();
    }
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let in_row = if r + 1 == rows { count - r * cols } else { cols };
            UavPos {
                x: field.size * (c as f64 + 0.5) / in_row as f64,
                y: field.size * (r as f64 + 0.5) / rows as f64,
                altitude,
            }
        })
        .collect()
}

/// `n` devices placed uniformly over the union of the UAV coverage discs.
pub fn place_devices(n: usize, uavs: &[UavPos], radius: f64, field: Field, stream: StreamKey) -> Vec<DevicePos> {
    (0..n)
        .map(|i| {
            let mut rng = stream.child(i as u64).rng();
            if uavs.is_empty() {
                return DevicePos { x: rng.random::<f64>() * field.size, y: rng.random::<f64>() * field.size };
            }
            loop {
                let u = uavs[rng.random_range(0..uavs.len())];
                let p = sample_in_disc(&mut rng, u.x, u.y, radius, field);
                let hits = uavs.iter().filter(|v| horizontal_distance(p, **v) <= radius).count();
                if hits <= 1 || rng.random::<f64>() < 1.0 / hits as f64 {
                    return p;
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uav(x: f64, y: f64) -> UavPos {
        UavPos { x, y, altitude: 150.0 }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(DevicePos { x: 0.0, y: 0.0 }, uav(0.0, 0.0)), 150.0);
        let flat = UavPos { x: 0.0, y: 0.0, altitude: 0.0 };
        assert_eq!(distance(DevicePos { x: 300.0, y: 400.0 }, flat), 500.0);
        let d = distance(DevicePos { x: 1000.0, y: 0.0 }, uav(0.0, 0.0));
        assert!((d - 1011.187420807834).abs() < 1e-9);
    }

    #[test]
    fn link_rate_examples() {
        assert_eq!(link_rate(1e6, 0.0, 10.0, 2.0, 1e-20).unwrap(), 0.0);
        assert_eq!(link_rate(0.0, 1.0, 10.0, 2.0, 1e-20).unwrap(), 0.0);
        let r = link_rate(1e6, 0.5, 1000.0, 2.0, 1e-20).unwrap();
        let expect = 1e6 * (1.0 + 5e7f64).log2();
        assert!((r - expect).abs() / expect < 1e-12);
        assert!((r - 2.5575e7).abs() < 1e3);
        assert!(link_rate(1e6, 1.0, 0.0, 2.0, 1e-20).is_err());
    }

    #[test]
    fn coverage_examples() {
        let u = uav(0.0, 0.0);
        assert!(coverage_set(u, &[], 5000.0).is_empty());
        let devs = [
            DevicePos { x: 1000.0, y: 0.0 },
            DevicePos { x: 4900.0, y: 0.0 },
            DevicePos { x: 5100.0, y: 0.0 },
            DevicePos { x: 3000.0, y: 4000.0 },
        ];
        assert_eq!(coverage_set(u, &devs, 5000.0), vec![0, 1, 3]);
    }

    #[test]
    fn mobility_examples() {
        let field = Field { size: 20_000.0 };
        let uavs = grid_uav_positions(5, field, 150.0);
        let devs = place_devices(150, &uavs, 5000.0, field, StreamKey::new(1, "place"));
        let still = MobilityModel { xi: 0.0, rng_stream: StreamKey::new(1, "mob") };
        assert_eq!(move_devices(&devs, &uavs, 5000.0, field, &still, 0), devs);

        let m = MobilityModel { xi: 0.3, rng_stream: StreamKey::new(1, "mob") };
        let moved = move_devices(&devs, &uavs, 5000.0, field, &m, 0);
        let count = moved.iter().zip(&devs).filter(|(a, b)| a != b).count();
        assert!((30..=60).contains(&count), "relocations {count}");
        assert_eq!(moved, move_devices(&devs, &uavs, 5000.0, field, &m, 0));

        let one = [uav(10_000.0, 10_000.0)];
        let all = MobilityModel { xi: 1.0, rng_stream: StreamKey::new(2, "mob") };
        let moved = move_devices(&devs, &one, 5000.0, field, &all, 3);
        assert!(moved.iter().all(|p| horizontal_distance(*p, one[0]) <= 5000.0));
        assert!(moved.iter().zip(&devs).all(|(a, b)| a != b));
    }

    #[test]
    fn grid_is_inside_field() {
        let field = Field { size: 20_000.0 };
        for n in 1..10 {
            let g = grid_uav_positions(n, field, 150.0);
            assert_eq!(g.len(), n);
            assert!(g.iter().all(|u| field.contains(u.x, u.y)));
        }
    }
}
