//! Constrained TD3 agent that picks one UAV's selection threshold.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Mlp, OutAct};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// State observed by the agent: loss and accuracy of the UAV's model.
pub type State = [f64; 2];

/// Agent hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Td3Config {
    /// Discount factor.
    pub gamma: f64,
    /// Soft-update rate of the target networks.
    pub tau: f64,
    /// Critic updates per actor update.
    pub policy_delay: u32,
    /// Standard deviation of the exploration and target-smoothing noise.
    pub noise_sigma: f64,
    /// Clip bound of that noise.
    pub noise_clip: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Initial penalty coefficient.
    pub alpha0: f64,
    /// Penalty increment per actor update.
    pub delta_alpha: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Width of both hidden layers.
    pub hidden: usize,
    /// Candidate thresholds tried per episode.
    pub t_step: u32,
    /// Uniformly random actions taken before the policy acts.
    pub warmup: u32,
}

impl Default for Td3Config {
    fn default() -> Self {
        Td3Config {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            noise_sigma: 0.1,
            noise_clip: 0.25,
            buffer_capacity: 10_000,
            batch_size: 64,
            alpha0: 1.0,
            delta_alpha: 0.5,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            hidden: 64,
            t_step: 4,
            warmup: 200,
        }
    }
}

impl Td3Config {
    /// Checks the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(Error::Config { path: format!("p2.td3.{path}"), msg: msg.into() });
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", "must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay", "must be at least 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_clip >= 0.0) {
            return bad("noise_sigma", "noise parameters must be non-negative");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size", "need 1 <= batch_size <= buffer_capacity");
        }
        if !(self.delta_alpha > 0.0 && self.alpha0 >= 0.0) {
            return bad("delta_alpha", "penalty increment must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) || self.hidden == 0 {
            return bad("actor_lr", "learning rates and width must be positive");
        }
        if self.t_step == 0 {
            return bad("t_step", "must be at least 1");
        }
        Ok(())
    }
}

/// One stored interaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: State,
    pub a: f64,
    pub r: f64,
    pub s_next: State,
}

/// What the environment reports for one candidate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    /// Shaped reward, already including the penalty.
    pub reward: f64,
    pub next_state: State,
    /// Amount by which the worst device exceeds its deadline, s; zero when feasible.
    pub violation: f64,
}

/// Environment that scores candidate thresholds.
pub trait CandidateEnv {
    /// Scores threshold `action` under penalty coefficient `alpha_tilde`.
    fn evaluate(&mut self, action: f64, alpha_tilde: f64) -> Feedback;
}

/// A tried threshold and its outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: f64,
    pub reward: f64,
    pub violation: f64,
}

/// Result of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    /// Threshold with the largest reward.
    pub beta: f64,
    pub reward: f64,
    pub violation: f64,
    pub next_state: State,
    pub candidates: Vec<Candidate>,
}

/// Twin-critic target `r + gamma min(q1, q2)`.
pub fn twin_min_target(r: f64, gamma: f64, q1: f64, q2: f64) -> f64 {
    r + gamma * q1.min(q2)
}

/// Penalty after critic update `t`: grows by `delta` whenever `t` is a multiple of `d`.
pub fn update_penalty(alpha_tilde: f64, t: u64, d: u32, delta: f64) -> f64 {
    if d > 0 && t.is_multiple_of(d as u64) {
        alpha_tilde + delta
    } else {
        alpha_tilde
    }
}

/// Twin critics, actor, their targets, replay buffer and penalty schedule.
#[derive(Debug, Clone)]
pub struct Td3Agent {
    pub cfg: Td3Config,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    buffer: VecDeque<Transition>,
    rng: ChaCha8Rng,
    /// Current penalty coefficient.
    pub alpha_tilde: f64,
    pub critic_updates: u64,
    pub actor_updates: u64,
    warmup_left: u32,
}

impl Td3Agent {
    /// Fresh agent; target networks start equal to their predictors.
    pub fn new(cfg: Td3Config, stream: StreamKey) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream.child(0).rng();
        let h = cfg.hidden;
        let actor = Mlp::new(&[2, h, h, 1], OutAct::Sigmoid, &mut init);
        let c1 = Mlp::new(&[3, h, h, 1], OutAct::Linear, &mut init);
        let c2 = Mlp::new(&[3, h, h, 1], OutAct::Linear, &mut init);
        Ok(Td3Agent {
            actor_opt: Adam::new(actor.len(), cfg.actor_lr),
            critic_opts: [Adam::new(c1.len(), cfg.critic_lr), Adam::new(c2.len(), cfg.critic_lr)],
            actor_target: actor.clone(),
            critic_targets: [c1.clone(), c2.clone()],
            actor,
            critics: [c1, c2],
            buffer: VecDeque::with_capacity(cfg.buffer_capacity),
            rng: stream.child(1).rng(),
            alpha_tilde: cfg.alpha0,
            critic_updates: 0,
            actor_updates: 0,
            warmup_left: cfg.warmup,
            cfg,
        })
    }

    /// Deterministic policy output.
    pub fn policy(&self, s: &State) -> f64 {
        self.actor.forward(s)[0]
    }

    /// Policy output plus `noise` clipped to the noise bound, then clamped to `[0, 1]`.
    pub fn act_with_noise(&self, s: &State, noise: f64) -> f64 {
        let c = self.cfg.noise_clip;
        (self.policy(s) + noise.clamp(-c, c)).clamp(0.0, 1.0)
    }

    fn noise(&mut self) -> f64 {
        if self.cfg.noise_sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.cfg.noise_sigma).expect("positive std").sample(&mut self.rng)
    }

    /// Exploratory action.
    pub fn act(&mut self, s: &State) -> f64 {
        let n = self.noise();
        self.act_with_noise(s, n)
    }

    /// Uniform random action during warm-up, exploratory policy action afterwards.
    pub fn explore(&mut self, s: &State) -> f64 {
        if self.warmup_left > 0 {
            self.warmup_left -= 1;
            return self.rng.random::<f64>();
        }
        self.act(s)
    }

    /// Random actions still to be taken before the policy acts.
    pub fn warmup_left(&self) -> u32 {
        self.warmup_left
    }

    /// Replay buffer contents, oldest first.
    pub fn buffer(&self) -> &VecDeque<Transition> {
        &self.buffer
    }

    /// Appends a transition, evicting the oldest once full.
    pub fn remember(&mut self, t: Transition) {
        if self.buffer.len() == self.cfg.buffer_capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(t);
    }

    fn q(net: &Mlp, s: &State, a: f64) -> f64 {
        net.forward(&[s[0], s[1], a])[0]
    }

    /// Critic targets for a batch, using smoothed target-policy actions.
    pub fn critic_target(&mut self, batch: &[Transition]) -> Vec<f64> {
        batch
            .iter()
            .map(|t| {
                let n = self.noise();
                let c = self.cfg.noise_clip;
                let a = (self.actor_target.forward(&t.s_next)[0] + n.clamp(-c, c)).clamp(0.0, 1.0);
                let q1 = Self::q(&self.critic_targets[0], &t.s_next, a);
                let q2 = Self::q(&self.critic_targets[1], &t.s_next, a);
                twin_min_target(t.r, self.cfg.gamma, q1, q2)
            })
            .collect()
    }

    /// Mean of `(Q - z)^2 / 2` for critic `which`, and its gradient.
    pub fn critic_loss_and_grad(&self, which: usize, batch: &[Transition], targets: &[f64]) -> (f64, Vec<f64>) {
        let net = &self.critics[which];
        let mut grad = vec![0.0; net.len()];
        let inv = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for (t, z) in batch.iter().zip(targets) {
            let cache = net.forward_cache(&[t.s[0], t.s[1], t.a]);
            let err = cache.output()[0] - z;
            loss += 0.5 * err * err * inv;
            net.backward(&cache, &[err * inv], &mut grad);
        }
        (loss, grad)
    }

    /// Mean `Q1(s, mu(s))` over the batch, and its gradient with respect to the actor.
    pub fn actor_objective_and_grad(&self, batch: &[Transition]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.actor.len()];
        let mut scratch = vec![0.0; self.critics[0].len()];
        let inv = 1.0 / batch.len() as f64;
        let mut value = 0.0;
        for t in batch {
            let ac = self.actor.forward_cache(&t.s);
            let a = ac.output()[0];
            let cc = self.critics[0].forward_cache(&[t.s[0], t.s[1], a]);
            value += cc.output()[0] * inv;
            let d_in = self.critics[0].backward(&cc, &[inv], &mut scratch);
            self.actor.backward(&ac, &[d_in[2]], &mut grad);
        }
        (value, grad)
    }

    /// One gradient step of both critics towards the twin-min targets; returns the summed loss.
    pub fn update_critics(&mut self, batch: &[Transition]) -> f64 {
        let targets = self.critic_target(batch);
        let mut total = 0.0;
        for k in 0..2 {
            let (loss, grad) = self.critic_loss_and_grad(k, batch, &targets);
            self.critic_opts[k].step(&mut self.critics[k].params, &grad);
            total += loss;
        }
        self.critic_updates += 1;
        total
    }

    /// One gradient ascent step of the actor on `Q1(s, mu(s))`.
    pub fn update_actor(&mut self, batch: &[Transition]) {
        let (_, mut grad) = self.actor_objective_and_grad(batch);
        grad.iter_mut().for_each(|g| *g = -*g);
        self.actor_opt.step(&mut self.actor.params, &grad);
        self.actor_updates += 1;
    }

    /// Blends every target network towards its predictor by `tau`.
    pub fn soft_update(&mut self, tau: f64) {
        self.actor_target.blend_from(&self.actor, tau);
        for k in 0..2 {
            self.critic_targets[k].blend_from(&self.critics[k], tau);
        }
    }

    /// Uniform minibatch drawn with replacement.
    pub fn sample_batch(&mut self) -> Vec<Transition> {
        let n = self.buffer.len();
        (0..self.cfg.batch_size.min(n.max(1))).map(|_| self.buffer[self.rng.random_range(0..n)]).collect()
    }

    /// Critic update, then on every `policy_delay`-th one an actor update, target blend and penalty step.
    pub fn train_step(&mut self) -> Option<f64> {
        if self.buffer.len() < self.cfg.batch_size {
            return None;
        }
        let batch = self.sample_batch();
        let loss = self.update_critics(&batch);
        if self.critic_updates.is_multiple_of(self.cfg.policy_delay as u64) {
            self.update_actor(&batch);
            self.soft_update(self.cfg.tau);
            self.alpha_tilde =
                update_penalty(self.alpha_tilde, self.critic_updates, self.cfg.policy_delay, self.cfg.delta_alpha);
        }
        Some(loss)
    }

    /// Tries `t_step` candidate thresholds from state `s`, learning from each, and returns the best.
    pub fn episode_step<E: CandidateEnv>(&mut self, env: &mut E, s: State) -> EpisodeOutcome {
        let mut candidates = Vec::with_capacity(self.cfg.t_step as usize);
        let mut best: Option<(Candidate, State)> = None;
        for _ in 0..self.cfg.t_step {
            let a = self.explore(&s);
            let fb = env.evaluate(a, self.alpha_tilde);
            self.remember(Transition { s, a, r: fb.reward, s_next: fb.next_state });
            self.train_step();
            let c = Candidate { action: a, reward: fb.reward, violation: fb.violation };
            if best.as_ref().is_none_or(|(b, _)| c.reward > b.reward) {
                best = Some((c, fb.next_state));
            }
            candidates.push(c);
        }
        let (b, next_state) = best.expect("t_step is at least 1");
        EpisodeOutcome { beta: b.action, reward: b.reward, violation: b.violation, next_state, candidates }
    }

    /// Takes `steps` warm-up actions from `s`, storing their transitions without training.
    pub fn pretrain<E: CandidateEnv>(&mut self, env: &mut E, s: State, steps: u32) {
        for _ in 0..steps {
            let a = self.rng.random::<f64>();
            self.warmup_left = self.warmup_left.saturating_sub(1);
            let fb = env.evaluate(a, self.alpha_tilde);
            self.remember(Transition { s, a, r: fb.reward, s_next: fb.next_state });
        }
    }

    /// Writes all six networks as little-endian `f64` values to `path`, plus a JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        for net in self.networks() {
            for p in &net.params {
                bytes.extend_from_slice(&p.to_le_bytes());
            }
        }
        std::fs::write(path, bytes)?;
        let meta = Checkpoint {
            config: self.cfg,
            alpha_tilde: self.alpha_tilde,
            critic_updates: self.critic_updates,
            actor_updates: self.actor_updates,
        };
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(sidecar(path), json)?;
        Ok(())
    }

    /// Restores networks and penalty state saved by [`Td3Agent::save`]; optimizer moments start fresh.
    pub fn load(path: &Path, stream: StreamKey) -> Result<Self> {
        let meta: Checkpoint =
            serde_json::from_str(&std::fs::read_to_string(sidecar(path))?).map_err(|e| Error::Io(e.to_string()))?;
        let mut agent = Td3Agent::new(meta.config, stream)?;
        let bytes = std::fs::read(path)?;
        let expected: usize = agent.networks().iter().map(|n| n.len()).sum();
        if bytes.len() != expected * 8 {
            return Err(Error::ShapeMismatch { expected: expected * 8, found: bytes.len() });
        }
        let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        for net in agent.networks_mut() {
            for p in net.params.iter_mut() {
                *p = values.next().expect("length checked");
            }
        }
        agent.alpha_tilde = meta.alpha_tilde;
        agent.critic_updates = meta.critic_updates;
        agent.actor_updates = meta.actor_updates;
        agent.warmup_left = 0;
        Ok(agent)
    }

    fn networks(&self) -> [&Mlp; 6] {
        [
            &self.actor,
            &self.actor_target,
            &self.critics[0],
            &self.critics[1],
            &self.critic_targets[0],
            &self.critic_targets[1],
        ]
    }

    fn networks_mut(&mut self) -> [&mut Mlp; 6] {
        let [c1, c2] = &mut self.critics;
        let [t1, t2] = &mut self.critic_targets;
        [&mut self.actor, &mut self.actor_target, c1, c2, t1, t2]
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    config: Td3Config,
    alpha_tilde: f64,
    critic_updates: u64,
    actor_updates: u64,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_examples() {
        assert!((twin_min_target(1.0, 0.9, 2.0, 3.0) - 2.8).abs() < 1e-12);
        assert_eq!(twin_min_target(1.5, 0.0, 2.0, 3.0), 1.5);
        assert_eq!(twin_min_target(1.0, 0.5, 2.0, 2.0), 2.0);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(update_penalty(1.0, 4, 2, 0.5), 1.5);
        assert_eq!(update_penalty(1.0, 3, 2, 0.5), 1.0);
        let mut a = 1.0;
        for t in 1..=10 {
            a = update_penalty(a, t, 5, 0.5);
        }
        assert_eq!(a, 2.0);
    }
}
