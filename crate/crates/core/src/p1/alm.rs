//! Penalized augmented Lagrangian solver.
//!
//! The max-delay term is moved into one epigraph constraint per device,
//! `G_n(x) <= Y`. For fixed multipliers the slack `Y` is minimized out in closed
//! form, leaving a smooth convex function of `(H, bandwidth shares)` that is
//! minimized by block-cyclic projected gradient descent: first `H`, then the
//! upload shares, then the broadcast shares.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{inv_rate, inv_rate_deriv, objective, P1Instance, P1Solution};
use crate::error::{Error, Result};

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlmConfig {
    /// Initial penalty factor.
    pub sigma0: f64,
    /// Initial multiplier of every constraint.
    pub upsilon0: f64,
    /// Exponent of the violation tolerance after a penalty increase.
    pub zeta1: f64,
    /// Exponent of the violation tolerance after a multiplier update.
    pub zeta2: f64,
    /// Penalty growth factor.
    pub rho: f64,
    /// Initial step size of the inner gradient descent.
    pub eta_hat: f64,
    /// Maximum inner sweeps per outer iteration.
    pub inner_cap: u32,
    /// Maximum outer iterations.
    pub outer_cap: u32,
    /// Starting local iteration count.
    pub h_init: f64,
    /// Largest local iteration count considered.
    pub h_max: f64,
    /// Inner stopping tolerance on the projected gradient, relative to the starting objective.
    pub inner_tol: f64,
    /// Outer stopping tolerance on the constraint violation, relative to the starting objective.
    pub violation_tol: f64,
    /// Smallest bandwidth share any device may receive.
    pub min_share: f64,
    /// Factor by which the violation must shrink between outer iterations to keep the penalty.
    pub decrease: f64,
}

impl Default for AlmConfig {
    fn default() -> Self {
        AlmConfig {
            sigma0: 1.0,
            upsilon0: 0.0,
            zeta1: 0.1,
            zeta2: 0.9,
            rho: 4.0,
            eta_hat: 0.002,
            inner_cap: 10_000,
            outer_cap: 50,
            h_init: 5.0,
            h_max: 64.0,
            inner_tol: 1e-6,
            violation_tol: 1e-5,
            min_share: 1e-9,
            decrease: 0.25,
        }
    }
}

impl AlmConfig {
    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(Error::Config { path: format!("p1.{path}"), msg: msg.into() });
        if !(self.sigma0 > 0.0) {
            return bad("sigma0", "must be positive");
        }
        if !(self.upsilon0 >= 0.0) {
            return bad("upsilon0", "must be non-negative");
        }
        if !(0.0 < self.zeta1 && self.zeta1 <= self.zeta2 && self.zeta2 <= 1.0) {
            return bad("zeta1", "need 0 < zeta1 <= zeta2 <= 1");
        }
        if !(2.0..=10.0).contains(&self.rho) {
            return bad("rho", "must lie in [2, 10]");
        }
        if !(self.eta_hat > 0.0) {
            return bad("eta_hat", "must be positive");
        }
        if !(self.h_init >= 1.0 && self.h_max >= 1.0) {
            return bad("h_max", "iteration bounds must be at least 1");
        }
        if !(self.inner_tol > 0.0 && self.violation_tol > 0.0) {
            return bad("inner_tol", "tolerances must be positive");
        }
        if !(self.min_share > 0.0 && self.min_share < 1.0) {
            return bad("min_share", "must lie in (0, 1)");
        }
        if !(self.decrease > 0.0 && self.decrease <= 1.0) {
            return bad("decrease", "must lie in (0, 1]");
        }
        Ok(())
    }
}

/// Multipliers, penalty factor and tolerance schedule of the outer loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlmState {
    /// One multiplier per epigraph constraint.
    pub upsilon: Vec<f64>,
    pub sigma: f64,
    /// Inner stopping tolerance.
    pub kappa: f64,
    /// Violation tolerance deciding between a multiplier and a penalty update.
    pub epsilon: f64,
    /// Outer iteration counter.
    pub j: u32,
    pub zeta1: f64,
    pub zeta2: f64,
    pub rho: f64,
}

impl AlmState {
    /// Initial state for `n` constraints.
    pub fn new(cfg: &AlmConfig, n: usize) -> Self {
        AlmState {
            upsilon: vec![cfg.upsilon0; n],
            sigma: cfg.sigma0,
            kappa: 1.0 / cfg.sigma0,
            epsilon: 1.0 / cfg.sigma0.powf(-cfg.zeta1),
            j: 0,
            zeta1: cfg.zeta1,
            zeta2: cfg.zeta2,
            rho: cfg.rho,
        }
    }
}

/// Closed-form slack `max(-upsilon / sigma - g, 0)`.
pub fn slack_closed_form(upsilon: f64, sigma: f64, g_val: f64) -> f64 {
    (-upsilon / sigma - g_val).max(0.0)
}

/// Violation degree `|max(g, -upsilon / sigma)|` of one constraint.
pub fn violation_psi(upsilon: f64, sigma: f64, g_val: f64) -> f64 {
    g_val.max(-upsilon / sigma).abs()
}

/// Next outer state.
///
/// With `violation_ok` the multipliers move by `sigma g` and the tolerances
/// tighten; otherwise the penalty grows by `rho` and the tolerances reset.
pub fn outer_update(state: &AlmState, g_val: &[f64], violation_ok: bool) -> AlmState {
    let mut next = state.clone();
    next.j += 1;
    if violation_ok {
        for (u, g) in next.upsilon.iter_mut().zip(g_val) {
            *u = (*u + state.sigma * g).max(0.0);
        }
        next.kappa = state.kappa / next.sigma;
        next.epsilon = state.epsilon / next.sigma.powf(-state.zeta2);
    } else {
        next.sigma = state.rho * state.sigma;
        next.kappa = 1.0 / next.sigma;
        next.epsilon = 1.0 / next.sigma.powf(-state.zeta1);
    }
    next
}

/// Smooth objective over a product of convex blocks.
pub trait InnerProblem {
    /// Number of variables.
    fn dim(&self) -> usize;
    /// Index ranges of the blocks, updated in order.
    fn blocks(&self) -> Vec<Range<usize>>;
    /// Value at `x`; writes the gradient into `grad`.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Projects block `block` of `x` onto its feasible set.
    fn project(&self, block: usize, x: &mut [f64]);
}

/// Result of [`inner_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct InnerResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Sweeps over all blocks.
    pub iterations: u32,
    /// Norm of the projected gradient step at `x`.
    pub residual: f64,
    /// Set when the sweep cap was hit before the tolerance.
    pub capped: bool,
}

fn residual<P: InnerProblem>(p: &P, blocks: &[Range<usize>], x: &[f64], g: &[f64], buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.extend(x.iter().zip(g).map(|(a, b)| a - b));
    for i in 0..blocks.len() {
        p.project(i, buf);
    }
    buf.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Block-cyclic projected gradient descent with backtracking.
///
/// Each block keeps its own step size, starting at `step0`, halved until the
/// sufficient-decrease test passes and doubled after every accepted step.
/// Stops once the projected gradient norm is at most `tol`.
pub fn inner_minimize<P: InnerProblem>(p: &P, start: &[f64], tol: f64, step0: f64, cap: u32) -> InnerResult {
    let blocks = p.blocks();
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut val = p.value_grad(&x, &mut g);
    let mut steps = vec![step0; blocks.len()];
    let mut y = x.clone();
    let mut gy = g.clone();
    let mut buf = Vec::with_capacity(x.len());
    let mut iterations = 0;
    loop {
        let res = residual(p, &blocks, &x, &g, &mut buf);
        if res <= tol || iterations >= cap {
            return InnerResult { x, value: val, iterations, residual: res, capped: res > tol };
        }
        iterations += 1;
        for (bi, blk) in blocks.iter().enumerate() {
            loop {
                y.copy_from_slice(&x);
                for i in blk.clone() {
                    y[i] -= steps[bi] * g[i];
                }
                p.project(bi, &mut y);
                let (mut lin, mut sq) = (0.0, 0.0);
                for i in blk.clone() {
                    let d = y[i] - x[i];
                    lin += g[i] * d;
                    sq += d * d;
                }
                if sq == 0.0 {
                    break;
                }
                let v = p.value_grad(&y, &mut gy);
                if v <= val + lin + sq / (2.0 * steps[bi]) + 1e-15 * val.abs() {
                    std::mem::swap(&mut x, &mut y);
                    std::mem::swap(&mut g, &mut gy);
                    val = v;
                    steps[bi] *= 2.0;
                    break;
                }
                steps[bi] *= 0.5;
                if steps[bi] < 1e-300 {
                    steps[bi] = step0;
                    break;
                }
            }
        }
    }
}

/// Projects `s` onto `{s_i >= lo, sum s_i = 1}`.
fn project_shares(s: &mut [f64], lo: f64) {
    let n = s.len();
    let radius = 1.0 - n as f64 * lo;
    let mut sorted: Vec<f64> = s.iter().map(|v| v - lo).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cum += v;
        let t = (cum - radius) / (k + 1) as f64;
        if k + 1 == n || sorted[k + 1] <= t {
            theta = t;
            break;
        }
    }
    for v in s.iter_mut() {
        *v = lo + (*v - lo - theta).max(0.0);
    }
}

/// Minimizer over `Y` of the augmented Lagrangian: the root of `sigma sum max(0, c_n - Y) = 1`.
fn optimal_slack(c: &[f64], sigma: f64, sorted: &mut Vec<f64>) -> f64 {
    sorted.clear();
    sorted.extend_from_slice(c);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    for k in 0..sorted.len() {
        cum += sorted[k];
        let y = (cum - 1.0 / sigma) / (k + 1) as f64;
        if k + 1 == sorted.len() || sorted[k + 1] <= y {
            return y;
        }
    }
    f64::NEG_INFINITY
}

/// Reduced augmented Lagrangian of one allocation problem.
struct Reduced<'a> {
    inst: &'a P1Instance,
    scale: f64,
    sigma: f64,
    upsilon: &'a [f64],
    h_lo: f64,
    h_hi: f64,
    min_share: f64,
}

struct Eval {
    g: Vec<f64>,
    slack: f64,
}

impl Reduced<'_> {
    fn n(&self) -> usize {
        self.inst.devices.len()
    }

    fn bandwidths(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        (
            x[1..1 + n].iter().map(|s| s * self.inst.b_d2u_total).collect(),
            x[1 + n..].iter().map(|s| s * self.inst.b_u2d_total).collect(),
        )
    }

    fn eval(&self, x: &[f64]) -> Eval {
        let (bd, bu) = self.bandwidths(x);
        let (_, delays) = self.inst.split_terms(x[0], &bd, &bu);
        let g: Vec<f64> = delays.iter().map(|d| d / self.scale).collect();
        let c: Vec<f64> = g.iter().zip(self.upsilon).map(|(g, u)| g + u / self.sigma).collect();
        let slack = optimal_slack(&c, self.sigma, &mut Vec::new());
        Eval { g, slack }
    }
}

impl InnerProblem for Reduced<'_> {
    fn dim(&self) -> usize {
        1 + 2 * self.n()
    }

    fn blocks(&self) -> Vec<Range<usize>> {
        let n = self.n();
        vec![0..1, 1..1 + n, 1 + n..1 + 2 * n]
    }

    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.n();
        let inst = self.inst;
        let h = x[0];
        let mut f0 = 0.0;
        let mut gd = Vec::with_capacity(n);
        let mut gu = Vec::with_capacity(n);
        let mut c = Vec::with_capacity(n);
        for (i, d) in inst.devices.iter().enumerate() {
            let bd = x[1 + i] * inst.b_d2u_total;
            let bu = x[1 + n + i] * inst.b_u2d_total;
            let (rd, ru) = (inv_rate(bd, d.cal_a_d2u), inv_rate(bu, d.cal_a_u2d));
            f0 += d.a_d2u * rd + d.a_u2d * ru + h * d.c_coef;
            c.push((d.u_d2u * rd + d.u_u2d * ru + h * d.z) / self.scale + self.upsilon[i] / self.sigma);
            gd.push(inv_rate_deriv(bd, d.cal_a_d2u));
            gu.push(inv_rate_deriv(bu, d.cal_a_u2d));
        }
        let y = optimal_slack(&c, self.sigma, &mut Vec::with_capacity(n));
        let mut value = f0 / self.scale + y;
        let mut gh = 0.0;
        for (i, d) in inst.devices.iter().enumerate() {
            let excess = (c[i] - y).max(0.0);
            let shift = self.upsilon[i] / self.sigma;
            value += 0.5 * self.sigma * (excess * excess - shift * shift);
            let mu = self.sigma * excess;
            gh += d.c_coef + mu * d.z;
            grad[1 + i] = inst.b_d2u_total * (d.a_d2u + mu * d.u_d2u) * gd[i] / self.scale;
            grad[1 + n + i] = inst.b_u2d_total * (d.a_u2d + mu * d.u_u2d) * gu[i] / self.scale;
        }
        grad[0] = gh / self.scale;
        value
    }

    fn project(&self, block: usize, x: &mut [f64]) {
        let n = self.n();
        match block {
            0 => x[0] = x[0].clamp(self.h_lo, self.h_hi),
            1 => project_shares(&mut x[1..1 + n], self.min_share),
            _ => project_shares(&mut x[1 + n..1 + 2 * n], self.min_share),
        }
    }
}

struct AlmRun {
    x: Vec<f64>,
    outer: u32,
    inner: u64,
    warning: bool,
}

fn run_alm(inst: &P1Instance, cfg: &AlmConfig, h_lo: f64, h_hi: f64, start: Vec<f64>, scale: f64) -> AlmRun {
    let n = inst.devices.len();
    let mut state = AlmState::new(cfg, n);
    let eps0 = state.epsilon;
    let mut x = start;
    let (mut inner, mut warning) = (0u64, false);
    let mut prev_psi = f64::INFINITY;
    loop {
        let problem =
            Reduced { inst, scale, sigma: state.sigma, upsilon: &state.upsilon, h_lo, h_hi, min_share: cfg.min_share };
        let mut x0 = x.clone();
        for b in 0..3 {
            problem.project(b, &mut x0);
        }
        let r = inner_minimize(&problem, &x0, state.kappa.min(cfg.inner_tol), cfg.eta_hat, cfg.inner_cap);
        inner += r.iterations as u64;
        warning |= r.capped;
        x = r.x;
        let e = problem.eval(&x);
        let g: Vec<f64> = e.g.iter().map(|gn| gn - e.slack).collect();
        let psi = g.iter().zip(&state.upsilon).map(|(gn, u)| violation_psi(*u, state.sigma, *gn)).fold(0.0, f64::max);
        if psi <= eps0.min(cfg.violation_tol) {
            return AlmRun { x, outer: state.j + 1, inner, warning };
        }
        if state.j + 1 >= cfg.outer_cap {
            return AlmRun { x, outer: state.j + 1, inner, warning: true };
        }
        let ok = psi <= state.epsilon && psi <= cfg.decrease * prev_psi;
        prev_psi = psi;
        state = outer_update(&state, &g, ok);
    }
}

fn check_instance(inst: &P1Instance, cfg: &AlmConfig) -> Result<()> {
    cfg.validate()?;
    if inst.devices.is_empty() {
        return Err(Error::Empty("P1 selection"));
    }
    if !(inst.b_d2u_total > 0.0 && inst.b_u2d_total > 0.0) {
        return Err(Error::Infeasible("bandwidth budgets must be positive".into()));
    }
    if inst.devices.len() as f64 * cfg.min_share >= 1.0 {
        return Err(Error::Infeasible("too many devices for the minimum bandwidth share".into()));
    }
    Ok(())
}

fn uniform_start(n: usize, h: f64) -> Vec<f64> {
    let mut x = vec![1.0 / n as f64; 1 + 2 * n];
    x[0] = h;
    x
}

fn finish(inst: &P1Instance, run: &AlmRun, h: u32, h_relaxed: f64) -> P1Solution {
    let n = inst.devices.len();
    let b_d2u: Vec<f64> = run.x[1..1 + n].iter().map(|s| s * inst.b_d2u_total).collect();
    let b_u2d: Vec<f64> = run.x[1 + n..].iter().map(|s| s * inst.b_u2d_total).collect();
    P1Solution {
        h_star: h,
        objective_value: objective(inst, h as f64, &b_d2u, &b_u2d),
        b_d2u,
        b_u2d,
        h_relaxed,
        outer_iterations: run.outer,
        inner_iterations: run.inner,
        warning: run.warning,
    }
}

fn reference_scale(inst: &P1Instance, x: &[f64]) -> f64 {
    let n = inst.devices.len();
    let bd: Vec<f64> = x[1..1 + n].iter().map(|s| s * inst.b_d2u_total).collect();
    let bu: Vec<f64> = x[1 + n..].iter().map(|s| s * inst.b_u2d_total).collect();
    let v = objective(inst, x[0], &bd, &bu);
    if v.is_finite() && v > 0.0 {
        v
    } else {
        1.0
    }
}

/// Solves the allocation with the local iteration count fixed to `h`.
pub fn solve_fixed_h(inst: &P1Instance, cfg: &AlmConfig, h: u32) -> Result<P1Solution> {
    check_instance(inst, cfg)?;
    if h == 0 {
        return Err(Error::Domain("local iteration count must be at least 1".into()));
    }
    let start = uniform_start(inst.devices.len(), h as f64);
    let scale = reference_scale(inst, &start);
    let run = run_alm(inst, cfg, h as f64, h as f64, start, scale);
    Ok(finish(inst, &run, h, h as f64))
}

/// Solves the allocation, rounding the relaxed iteration count to the cheaper integer neighbor.
pub fn solve(inst: &P1Instance, cfg: &AlmConfig) -> Result<P1Solution> {
    check_instance(inst, cfg)?;
    let n = inst.devices.len();
    let start = uniform_start(n, cfg.h_init.clamp(1.0, cfg.h_max));
    let scale = reference_scale(inst, &start);
    let relaxed = run_alm(inst, cfg, 1.0, cfg.h_max, start, scale);
    let h_rel = relaxed.x[0];
    let lo = h_rel.floor().max(1.0);
    let hi = h_rel.ceil().max(1.0);
    if lo == h_rel {
        return Ok(finish(inst, &relaxed, lo as u32, h_rel));
    }
    let mut best: Option<P1Solution> = None;
    let (mut outer, mut inner, mut warning) = (relaxed.outer, relaxed.inner, relaxed.warning);
    for h in [lo, hi] {
        let mut x = relaxed.x.clone();
        x[0] = h;
        let run = run_alm(inst, cfg, h, h, x, scale);
        outer += run.outer;
        inner += run.inner;
        warning |= run.warning;
        let sol = finish(inst, &run, h as u32, h_rel);
        if best.as_ref().is_none_or(|b| sol.objective_value < b.objective_value) {
            best = Some(sol);
        }
    }
    let mut best = best.expect("two candidates evaluated");
    best.outer_iterations = outer;
    best.inner_iterations = inner;
    best.warning = warning;
    Ok(best)
}
