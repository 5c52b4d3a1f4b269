//! Local iteration count and bandwidth allocation for one UAV.
//!
//! The per-UAV problem minimizes the weighted energy and delay of one edge
//! round over the local iteration count `H` and the upload and broadcast
//! bandwidth given to each selected device. [`solve`] uses a penalized
//! augmented Lagrangian on the epigraph form of the max-delay term, and
//! [`brute_force_oracle`] searches a grid for small instances.

mod alm;
mod oracle;

pub use alm::{
    inner_minimize, outer_update, slack_closed_form, solve, solve_fixed_h, violation_psi, AlmConfig, AlmState,
    InnerProblem, InnerResult,
};
pub use oracle::{brute_force_oracle, compositions};

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::cost::{DeviceProfile, UavProfile};
use crate::error::{Error, Result};
use crate::net::ChannelParams;

/// Objective constants of one selected device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct P1Device {
    /// Upload energy weight `lambda4 I_n p_n`.
    pub a_d2u: f64,
    /// Upload SNR numerator `p_n d^-alpha / N0`.
    pub cal_a_d2u: f64,
    /// Broadcast energy weight `lambda4 I_m p_m`.
    pub a_u2d: f64,
    /// Broadcast SNR numerator `p_m d^-alpha / N0`.
    pub cal_a_u2d: f64,
    /// Upload delay weight `(lambda4 p_hover + lambda5) I_n`.
    pub u_d2u: f64,
    /// Broadcast delay weight `(lambda4 p_hover + lambda5) I_m`.
    pub u_u2d: f64,
    /// Per-iteration delay weight `(lambda4 p_hover + lambda5) t_unit`.
    pub z: f64,
    /// Per-iteration compute energy weight `lambda4 f^2 phi c |D| theta / 2`.
    pub c_coef: f64,
}

/// One UAV's allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Instance {
    pub devices: Vec<P1Device>,
    pub b_d2u_total: f64,
    pub b_u2d_total: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    /// Index of the device with the largest `z`.
    pub n_star: usize,
}

/// Solved allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct P1Solution {
    pub h_star: u32,
    pub b_d2u: Vec<f64>,
    pub b_u2d: Vec<f64>,
    pub objective_value: f64,
    /// Continuous iteration count before rounding.
    pub h_relaxed: f64,
    pub outer_iterations: u32,
    pub inner_iterations: u64,
    /// Set when an iteration cap was hit before the tolerances were met.
    pub warning: bool,
}

/// One selected device as seen by its UAV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedDevice {
    pub profile: DeviceProfile,
    /// Slant distance to the UAV, m.
    pub dist: f64,
}

/// Builds the objective constants for the devices selected by one UAV.
pub fn build_instance(
    selected: &[SelectedDevice],
    uav: &UavProfile,
    channel: &ChannelParams,
    lambda4: f64,
    lambda5: f64,
) -> Result<P1Instance> {
    if selected.is_empty() {
        return Err(Error::Empty("P1 selection"));
    }
    let delay_w = lambda4 * uav.p_hover + lambda5;
    let devices: Vec<P1Device> = selected
        .iter()
        .map(|s| {
            let p = &s.profile;
            P1Device {
                a_d2u: lambda4 * p.i_d2u * p.p_d2u,
                cal_a_d2u: p.p_d2u * s.dist.powf(-channel.alpha_d2u) / channel.n0,
                a_u2d: lambda4 * uav.i_u2d * uav.p_u2d,
                cal_a_u2d: uav.p_u2d * s.dist.powf(-channel.alpha_u2d) / channel.n0,
                u_d2u: delay_w * p.i_d2u,
                u_u2d: delay_w * uav.i_u2d,
                z: delay_w * crate::cost::t_unit(p),
                c_coef: lambda4 * p.f * p.f * p.phi * p.c * p.dataset_size as f64 * p.theta / 2.0,
            }
        })
        .collect();
    let n_star = argmax(devices.iter().map(|d| d.z));
    Ok(P1Instance { devices, b_d2u_total: uav.b_d2u_total, b_u2d_total: uav.b_u2d_total, lambda4, lambda5, n_star })
}

fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in it.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Inverse rate `1 / (b log2(1 + a / b))`, infinite at `b = 0`.
pub fn inv_rate(b: f64, cal_a: f64) -> f64 {
    if b <= 0.0 {
        return f64::INFINITY;
    }
    std::f64::consts::LN_2 / (b * (cal_a / b).ln_1p())
}

/// Derivative of [`inv_rate`] with respect to `b`.
pub fn inv_rate_deriv(b: f64, cal_a: f64) -> f64 {
    let l = (cal_a / b).ln_1p();
    -std::f64::consts::LN_2 * (l - cal_a / (b + cal_a)) / (b * l * b * l)
}

impl P1Instance {
    /// Number of selected devices.
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    /// Whether no device is selected.
    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// Energy part and per-device delay parts of the objective.
    pub fn split_terms(&self, h: f64, b_d2u: &[f64], b_u2d: &[f64]) -> (f64, Vec<f64>) {
        let mut energy = 0.0;
        let delays = self
            .devices
            .iter()
            .zip(b_d2u.iter().zip(b_u2d))
            .map(|(d, (&bd, &bu))| {
                let (gd, gu) = (inv_rate(bd, d.cal_a_d2u), inv_rate(bu, d.cal_a_u2d));
                energy += d.a_d2u * gd + d.a_u2d * gu + h * d.c_coef;
                d.u_d2u * gd + d.u_u2d * gu + h * d.z
            })
            .collect();
        (energy, delays)
    }
}

/// Weighted cost of an allocation: summed energy terms plus the slowest device's delay term.
pub fn objective(inst: &P1Instance, h: f64, b_d2u: &[f64], b_u2d: &[f64]) -> f64 {
    let (energy, delays) = inst.split_terms(h, b_d2u, b_u2d);
    energy + delays.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Random instance with `n` devices and parameters drawn from the default ranges.
///
/// Device distances fall inside a 5 km coverage disc at 150 m altitude and
/// the energy and delay weights are `(0.5, 0.5)`.
pub fn random_instance(n: usize, stream: crate::rng::StreamKey) -> P1Instance {
    let mut rng = stream.rng();
    let channel = ChannelParams::default();
    let uav = UavProfile {
        p_hover: 100.0,
        p_move: 160.0,
        speed: 16.0,
        p_u2d: rng.random_range(0.3..=1.2),
        p_u2u: rng.random_range(0.5..=1.0),
        battery: 1e5,
        b_d2u_total: rng.random_range(20e6..=100e6),
        b_u2d_total: rng.random_range(20e6..=100e6),
        b_u2u: 2e6,
        i_u2d: 698_880.0,
        i_u2u: 698_880.0,
    };
    let selected: Vec<SelectedDevice> = (0..n)
        .map(|_| {
            let r: f64 = 5000.0 * rng.random::<f64>().sqrt();
            SelectedDevice {
                profile: DeviceProfile {
                    f: rng.random_range(1e9..=10e9),
                    c: rng.random_range(30.0..=100.0) * 6272.0,
                    phi: 0.1,
                    theta: 1e-28,
                    t_fix: 0.01,
                    p_d2u: rng.random_range(0.2..=0.8),
                    dataset_size: rng.random_range(20..=200),
                    i_d2u: 698_880.0,
                },
                dist: (r * r + 150.0 * 150.0).sqrt(),
            }
        })
        .collect();
    build_instance(&selected, &uav, &channel, 0.5, 0.5).expect("non-empty selection")
}
