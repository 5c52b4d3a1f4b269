//! Exhaustive grid search used to check the solver on small instances.

use super::{inv_rate, P1Instance, P1Solution};

/// All ways to write `total` as an ordered sum of `parts` positive integers.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    if parts == 0 || (total as usize) < parts {
        return out;
    }
    let mut cur = vec![0u32; parts];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        let parts = cur.len();
        if pos + 1 == parts {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        let remaining = (parts - pos - 1) as u32;
        for k in 1..=left - remaining {
            cur[pos] = k;
            rec(pos + 1, left - k, cur, out);
        }
    }
    rec(0, total, &mut cur, &mut out);
    out
}

/// Best allocation over integer `H` in `h_range` and bandwidth shares on a `1/grid_points` lattice.
///
/// Each device receives a positive multiple of `budget / grid_points`, and the
/// shares of each link direction use the whole budget.
pub fn brute_force_oracle(inst: &P1Instance, h_range: (u32, u32), grid_points: u32) -> P1Solution {
    let n = inst.devices.len();
    let comps = compositions(grid_points, n);
    let g = grid_points as f64;
    let table = |total: f64, pick: fn(&super::P1Device) -> f64| -> Vec<Vec<f64>> {
        inst.devices
            .iter()
            .map(|d| (0..=grid_points).map(|k| inv_rate(k as f64 / g * total, pick(d))).collect())
            .collect()
    };
    let rd = table(inst.b_d2u_total, |d| d.cal_a_d2u);
    let ru = table(inst.b_u2d_total, |d| d.cal_a_u2d);
    let sum_c: f64 = inst.devices.iter().map(|d| d.c_coef).sum();

    let mut best = (f64::INFINITY, h_range.0, 0usize, 0usize);
    let mut energy_d = vec![0.0; comps.len()];
    let mut delay_d = vec![vec![0.0; n]; comps.len()];
    for (ci, c) in comps.iter().enumerate() {
        for (i, d) in inst.devices.iter().enumerate() {
            let r = rd[i][c[i] as usize];
            energy_d[ci] += d.a_d2u * r;
            delay_d[ci][i] = d.u_d2u * r;
        }
    }
    let mut delay_u = vec![0.0; n];
    for (ui, cu) in comps.iter().enumerate() {
        let mut energy_u = 0.0;
        for (i, d) in inst.devices.iter().enumerate() {
            let r = ru[i][cu[i] as usize];
            energy_u += d.a_u2d * r;
            delay_u[i] = d.u_u2d * r;
        }
        for di in 0..comps.len() {
            let base = energy_d[di] + energy_u;
            for h in h_range.0..=h_range.1 {
                let hf = h as f64;
                let mut worst = f64::NEG_INFINITY;
                for (i, d) in inst.devices.iter().enumerate() {
                    worst = worst.max(delay_d[di][i] + delay_u[i] + hf * d.z);
                }
                let v = base + hf * sum_c + worst;
                if v < best.0 {
                    best = (v, h, di, ui);
                }
            }
        }
    }
    let (value, h, di, ui) = best;
    P1Solution {
        h_star: h,
        b_d2u: comps[di].iter().map(|&k| k as f64 / g * inst.b_d2u_total).collect(),
        b_u2d: comps[ui].iter().map(|&k| k as f64 / g * inst.b_u2d_total).collect(),
        objective_value: value,
        h_relaxed: h as f64,
        outer_iterations: 0,
        inner_iterations: 0,
        warning: false,
    }
}
