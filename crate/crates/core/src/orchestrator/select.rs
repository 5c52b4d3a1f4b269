//! Selection strategies and the one-step probe that scores candidate thresholds.

use rand::seq::index::sample;
use rand::Rng;

use crate::config::Selection;
use crate::cost::{device_round_costs, DeviceProfile, UavProfile};
use crate::error::Result;
use crate::learner::{eval_metrics, Dataset, Metrics, ModelParams};
use crate::net::ChannelParams;
use crate::p2::{select_with_fallback, shaped_reward, CandidateEnv, Feedback, FitnessWeights, State};
use crate::rng::StreamKey;

/// Fitness weights used by a strategy.
pub fn strategy_weights(selection: Selection, adaptive: FitnessWeights) -> FitnessWeights {
    match selection {
        Selection::DistanceOnly => FitnessWeights { lambda1: 0.0, lambda2: 1.0, lambda3: 0.0 },
        Selection::SimilarityOnly => FitnessWeights { lambda1: 1.0, lambda2: 0.0, lambda3: 0.0 },
        _ => adaptive,
    }
}

/// A uniformly random non-empty subset of `ids`, in input order.
pub fn random_subset(ids: &[usize], stream: StreamKey) -> Vec<usize> {
    if ids.is_empty() {
        return Vec::new();
    }
    let mut rng = stream.rng();
    let k = rng.random_range(1..=ids.len());
    let mut idx = sample(&mut rng, ids.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| ids[i]).collect()
}

/// One covered device as seen by the probe.
#[derive(Debug, Clone)]
pub struct ProbeDevice {
    pub id: usize,
    pub alpha: f64,
    pub profile: DeviceProfile,
    /// Slant distance to the UAV, m.
    pub dist: f64,
    /// Full-batch loss gradient of the device data at the broadcast model.
    pub grad: Vec<f64>,
}

/// Scores a threshold by applying one aggregated gradient step of the devices it selects.
pub struct ProbeEnv<'a> {
    pub devices: Vec<ProbeDevice>,
    pub model: &'a ModelParams,
    pub probe: &'a Dataset,
    /// Metrics of `model` on `probe`.
    pub base: Metrics,
    pub step: f64,
    pub uav: &'a UavProfile,
    pub channel: &'a ChannelParams,
    pub t_max: f64,
    pub lambda6: f64,
    pub lambda7: f64,
}

impl ProbeEnv<'_> {
    /// Device ids a threshold selects, with the single fittest device as fallback.
    pub fn select(&self, beta: f64) -> Vec<usize> {
        let pos: Vec<usize> = (0..self.devices.len()).collect();
        let alphas: Vec<f64> = self.devices.iter().map(|d| d.alpha).collect();
        select_with_fallback(&pos, &alphas, beta)
    }

    /// Slowest device delay of a selection under an even bandwidth split and one local step.
    pub fn worst_delay(&self, picked: &[usize]) -> Result<f64> {
        let n = picked.len().max(1) as f64;
        let mut worst = 0.0f64;
        for &i in picked {
            let d = &self.devices[i];
            let c = device_round_costs(
                &d.profile,
                1,
                self.uav.b_d2u_total / n,
                self.uav.b_u2d_total / n,
                d.dist,
                self.channel,
                self.uav,
            )?;
            worst = worst.max(c.t_dev);
        }
        Ok(worst)
    }

    fn stepped_metrics(&self, picked: &[usize]) -> Result<Metrics> {
        let total: f64 = picked.iter().map(|&i| self.devices[i].profile.dataset_size as f64).sum();
        let mut w = self.model.clone();
        for &i in picked {
            let d = &self.devices[i];
            let a = self.step * d.profile.dataset_size as f64 / total;
            for (p, g) in w.params.iter_mut().zip(&d.grad) {
                *p -= a * g;
            }
        }
        eval_metrics(&w, self.probe)
    }

    fn feedback(&self, beta: f64, alpha_tilde: f64) -> Result<Feedback> {
        let picked = self.select(beta);
        let after = self.stepped_metrics(&picked)?;
        let worst = self.worst_delay(&picked)?;
        let (w1, w2) = (self.base.loss - after.loss, after.accuracy - self.base.accuracy);
        Ok(Feedback {
            reward: shaped_reward(w1, w2, self.lambda6, self.lambda7, alpha_tilde, worst, self.t_max),
            next_state: [after.loss, after.accuracy],
            violation: (worst - self.t_max).max(0.0),
        })
    }
}

impl CandidateEnv for ProbeEnv<'_> {
    fn evaluate(&mut self, action: f64, alpha_tilde: f64) -> Feedback {
        self.feedback(action, alpha_tilde).unwrap_or(Feedback {
            reward: -1e3,
            next_state: [self.base.loss, self.base.accuracy],
            violation: f64::INFINITY,
        })
    }
}

/// Agent state from metrics.
pub fn state_of(m: &Metrics) -> State {
    [m.loss, m.accuracy]
}
