//! Device fitness scoring, threshold selection and cross-UAV association.

mod mlp;
pub mod stubs;
mod td3;

pub use mlp::{Adam, Cache, Mlp, OutAct};
pub use td3::{
    twin_min_target, update_penalty, Candidate, CandidateEnv, EpisodeOutcome, Feedback, State, Td3Agent, Td3Config,
    Transition,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw per-device measurements over one UAV's covered set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessInputs {
    /// Model difference score of each device.
    pub kld: Vec<f64>,
    /// Distance to the UAV, m.
    pub dist: Vec<f64>,
    /// CPU frequency, Hz.
    pub freq: Vec<f64>,
}

impl FitnessInputs {
    /// Largest model difference score.
    pub fn r_max(&self) -> f64 {
        self.kld.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest distance.
    pub fn d_min(&self) -> f64 {
        self.dist.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest frequency.
    pub fn f_max(&self) -> f64 {
        self.freq.iter().copied().fold(0.0, f64::max)
    }
}

/// Weights of similarity, distance and frequency in the fitness score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl FitnessWeights {
    /// Checks each weight is in `[0, 1]` and they sum to 1.
    pub fn validate(&self) -> Result<()> {
        let w = [self.lambda1, self.lambda2, self.lambda3];
        if w.iter().any(|v| !(0.0..=1.0).contains(v)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config {
                path: "p2.lambda1".into(),
                msg: format!("lambda1 + lambda2 + lambda3 must equal 1 with each in [0, 1], got {w:?}"),
            });
        }
        Ok(())
    }
}

/// Weighted blend of the three normalized scores.
pub fn fitness_from_scores(s_sim: f64, s_dis: f64, s_fre: f64, w: &FitnessWeights) -> f64 {
    w.lambda1 * s_sim + w.lambda2 * s_dis + w.lambda3 * s_fre
}

/// Fitness `lambda1 R/R_max + lambda2 d_min/d + lambda3 f/f_max` of every covered device.
///
/// When every difference score is zero the similarity score is 1 for all devices.
pub fn fitness(inputs: &FitnessInputs, weights: &FitnessWeights) -> Result<Vec<f64>> {
    let n = inputs.kld.len();
    if n == 0 {
        return Err(Error::Empty("covered devices"));
    }
    if inputs.dist.len() != n || inputs.freq.len() != n {
        return Err(Error::ShapeMismatch { expected: n, found: inputs.dist.len().min(inputs.freq.len()) });
    }
    let (r_max, d_min, f_max) = (inputs.r_max(), inputs.d_min(), inputs.f_max());
    Ok((0..n)
        .map(|i| {
            let s_sim = if r_max > 0.0 { inputs.kld[i] / r_max } else { 1.0 };
            let s_dis = if inputs.dist[i] > 0.0 { d_min / inputs.dist[i] } else { 1.0 };
            let s_fre = if f_max > 0.0 { inputs.freq[i] / f_max } else { 1.0 };
            fitness_from_scores(s_sim, s_dis, s_fre, weights).clamp(0.0, 1.0)
        })
        .collect())
}

/// Devices whose fitness is at least `beta`.
pub fn select_by_threshold(ids: &[usize], alphas: &[f64], beta: f64) -> Vec<usize> {
    ids.iter().zip(alphas).filter(|(_, a)| **a >= beta).map(|(i, _)| *i).collect()
}

/// [`select_by_threshold`], falling back to the single fittest device when nothing passes.
pub fn select_with_fallback(ids: &[usize], alphas: &[f64], beta: f64) -> Vec<usize> {
    let picked = select_by_threshold(ids, alphas, beta);
    if !picked.is_empty() || ids.is_empty() {
        return picked;
    }
    let mut best = 0;
    for k in 1..ids.len() {
        if alphas[k] > alphas[best] {
            best = k;
        }
    }
    vec![ids[best]]
}

/// Makes per-UAV selections disjoint.
///
/// `selections[m]` lists `(device, fitness)` pairs chosen by the UAV at
/// position `m`. A device claimed by several UAVs stays with the one that
/// scores it highest, the lowest position winning ties. Output order follows
/// the input order.
pub fn resolve_overlaps(selections: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    let mut owner: std::collections::BTreeMap<usize, (usize, f64)> = std::collections::BTreeMap::new();
    for (m, sel) in selections.iter().enumerate() {
        for &(dev, a) in sel {
            match owner.get(&dev) {
                Some(&(_, best)) if best >= a => {}
                _ => {
                    owner.insert(dev, (m, a));
                }
            }
        }
    }
    selections
        .iter()
        .enumerate()
        .map(|(m, sel)| sel.iter().filter(|(d, _)| owner[d].0 == m).map(|(d, _)| *d).collect())
        .collect()
}

/// Reward `lambda6 w1 + lambda7 w2 - alpha (max(t_dev - t_max, 0))^2`.
pub fn shaped_reward(w1: f64, w2: f64, lambda6: f64, lambda7: f64, alpha_pen: f64, t_dev: f64, t_max: f64) -> f64 {
    let v = (t_dev - t_max).max(0.0);
    lambda6 * w1 + lambda7 * w2 - alpha_pen * v * v
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: FitnessWeights = FitnessWeights { lambda1: 0.6, lambda2: 0.2, lambda3: 0.2 };

    #[test]
    fn fitness_examples() {
        let inp = FitnessInputs { kld: vec![2.0, 1.0], dist: vec![100.0, 400.0], freq: vec![5e9, 1e9] };
        let a = fitness(&inp, &W).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert!((fitness_from_scores(0.5, 0.8, 0.2, &W) - 0.5).abs() < 1e-12);
        let inp = FitnessInputs { kld: vec![0.0, 1.0], dist: vec![100.0, 100.0], freq: vec![1e9, 1e9] };
        let a = fitness(&inp, &W).unwrap();
        assert!((a[0] - 0.4).abs() < 1e-12);
        assert!(fitness(&FitnessInputs { kld: vec![], dist: vec![], freq: vec![] }, &W).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(W.validate().is_ok());
        assert!(FitnessWeights { lambda1: 0.5, lambda2: 0.2, lambda3: 0.2 }.validate().is_err());
    }

    #[test]
    fn threshold_examples() {
        let ids = [4, 5, 6];
        let a = [0.3, 0.55, 0.9];
        assert_eq!(select_by_threshold(&ids, &a, 0.0), vec![4, 5, 6]);
        assert!(select_by_threshold(&ids, &a, 0.900_001).is_empty());
        assert_eq!(select_by_threshold(&ids, &a, 0.55), vec![5, 6]);
        assert_eq!(select_with_fallback(&ids, &a, 0.95), vec![6]);
    }

    #[test]
    fn overlap_examples() {
        let r = resolve_overlaps(&[vec![(7, 0.7), (1, 0.5)], vec![(7, 0.9)]]);
        assert_eq!(r, vec![vec![1], vec![7]]);
        let r = resolve_overlaps(&[vec![(1, 0.5)], vec![(2, 0.9)]]);
        assert_eq!(r, vec![vec![1], vec![2]]);
        let r = resolve_overlaps(&[vec![(3, 0.8)], vec![(3, 0.8)]]);
        assert_eq!(r, vec![vec![3], vec![]]);
    }

    #[test]
    fn reward_examples() {
        assert!((shaped_reward(0.3, 0.1, 0.5, 0.5, 1.0, 1.0, 2.0) - 0.2).abs() < 1e-12);
        assert!((shaped_reward(0.3, 0.1, 0.5, 0.5, 1.0, 2.0, 2.0) - 0.2).abs() < 1e-12);
        assert!((shaped_reward(0.0, 0.0, 0.5, 0.5, 1.0, 5.0, 3.0) + 4.0).abs() < 1e-12);
    }
}
