//! Local training, two-tier FedAvg, convergence and model-difference scoring.

mod data;
mod model;

pub use data::{synth_noniid, ClusterSpec, Dataset, Scheme};
pub use model::{log_sum_exp, softmax_in_place, ModelParams, ModelShape, Version};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Local SGD settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Learning rate.
    pub eta: f64,
    /// Number of local SGD steps.
    pub h: u32,
    /// Minibatch fraction of the local dataset.
    pub batch_fraction: f64,
    /// Seed of the minibatch sampler.
    pub seed: u64,
}

impl TrainConfig {
    /// Checks `eta >= 0`, `h >= 1` and `0 < batch_fraction <= 1`.
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) || self.h == 0 {
            return Err(Error::Domain(format!("invalid train config {self:?}")));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::Domain(format!("batch fraction {} outside (0, 1]", self.batch_fraction)));
        }
        Ok(())
    }
}

/// Loss and accuracy of a model on a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub accuracy: f64,
}

/// Runs `cfg.h` minibatch SGD steps on cross-entropy.
pub fn local_sgd(model: &ModelParams, data: &Dataset, cfg: &TrainConfig) -> Result<ModelParams> {
    cfg.validate()?;
    model.check_data(data)?;
    if data.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let batch = ((cfg.batch_fraction * data.len() as f64).ceil() as usize).clamp(1, data.len());
    let mut rng = StreamKey::new(cfg.seed, "sgd").rng();
    let mut out = model.clone();
    let mut grad = vec![0.0; out.params.len()];
    for step in 0..cfg.h {
        let idx = sample(&mut rng, data.len(), batch).into_vec();
        let loss = out.loss_and_grad(data, &idx, &mut grad);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { step, loss });
        }
        for (p, g) in out.params.iter_mut().zip(&grad) {
            *p -= cfg.eta * g;
        }
        out.version.h = step + 1;
    }
    Ok(out)
}

/// Weighted coordinate-wise mean with weights `w_i / sum(w)`.
pub fn fedavg(models: &[&ModelParams], weights: &[f64]) -> Result<ModelParams> {
    let first = models.first().ok_or(Error::Empty("fedavg models"))?;
    if models.len() != weights.len() {
        return Err(Error::ShapeMismatch { expected: models.len(), found: weights.len() });
    }
    if weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::Domain("fedavg weights must be positive".into()));
    }
    for m in &models[1..] {
        first.check_compatible(m)?;
    }
    let total: f64 = weights.iter().sum();
    let mut out = ModelParams::zeros(first.shape);
    out.version = first.version;
    for (m, w) in models.iter().zip(weights) {
        let a = w / total;
        for (o, p) in out.params.iter_mut().zip(&m.params) {
            *o += a * p;
        }
    }
    Ok(out)
}

/// Euclidean distance between two parameter vectors.
pub fn param_distance(a: &ModelParams, b: &ModelParams) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(a.params.iter().zip(&b.params).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Whether two consecutive global models are within `delta` of each other.
pub fn converged(w_g: &ModelParams, w_prev: &ModelParams, delta: f64) -> Result<bool> {
    Ok(param_distance(w_g, w_prev)? <= delta)
}

/// `KL(p || q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| pi * (pi / qi).ln()).sum::<f64>().max(0.0)
}

/// Sum over probe samples of `KL(softmax(uav) || softmax(device))`.
pub fn kld_score(uav_model: &ModelParams, dev_model: &ModelParams, probe: &Dataset) -> Result<f64> {
    uav_model.check_compatible(dev_model)?;
    uav_model.check_data(probe)?;
    let mut total = 0.0;
    for i in 0..probe.len() {
        let x = probe.row(i);
        let mut zp = uav_model.logits(x);
        let mut zq = dev_model.logits(x);
        let (lp, lq) = (log_sum_exp(&zp), log_sum_exp(&zq));
        let mut kl = 0.0;
        for (a, b) in zp.iter_mut().zip(zq.iter_mut()) {
            let logp = *a - lp;
            kl += logp.exp() * (logp - (*b - lq));
        }
        total += kl.max(0.0);
    }
    Ok(total)
}

/// Mean cross-entropy and accuracy.
pub fn eval_metrics(model: &ModelParams, data: &Dataset) -> Result<Metrics> {
    model.check_data(data)?;
    if data.is_empty() {
        return Ok(Metrics::default());
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for i in 0..data.len() {
        let z = model.logits(data.row(i));
        let y = data.labels[i] as usize;
        loss += log_sum_exp(&z) - z[y];
        let arg = z.iter().enumerate().fold(0, |best, (c, v)| if *v > z[best] { c } else { best });
        correct += usize::from(arg == y);
    }
    let n = data.len() as f64;
    Ok(Metrics { loss: loss / n, accuracy: correct as f64 / n })
}

/// Loss decrease and accuracy increase from `prev` to `cur`.
pub fn delta_metrics(prev: &Metrics, cur: &Metrics) -> (f64, f64) {
    (prev.loss - cur.loss, cur.accuracy - prev.accuracy)
}

/// Trains a UAV's personalized model on its own seed data for `steps` steps.
pub fn train_personalized(
    init: &ModelParams,
    seed_data: &Dataset,
    cfg: &TrainConfig,
    steps: u32,
) -> Result<ModelParams> {
    if seed_data.is_empty() {
        return Err(Error::Empty("personalization data"));
    }
    if steps == 0 {
        return Ok(init.clone());
    }
    local_sgd(init, seed_data, &TrainConfig { h: steps, ..*cfg })
}
