//! Reference environments with known optimal thresholds.

use super::td3::{CandidateEnv, Feedback};

/// Stateless bandit with reward `1 - (a - peak)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBandit {
    pub peak: f64,
}

impl CandidateEnv for QuadraticBandit {
    fn evaluate(&mut self, action: f64, _alpha_tilde: f64) -> Feedback {
        Feedback { reward: 1.0 - (action - self.peak).powi(2), next_state: [0.0, 0.0], violation: 0.0 }
    }
}

/// Bandit whose unconstrained optimum breaks a deadline.
///
/// The device delay is `slope * a` against the deadline `t_max`, and the
/// reward is `1 - (a - peak)^2` minus the quadratic deadline penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadlineBandit {
    pub peak: f64,
    pub slope: f64,
    pub t_max: f64,
}

impl CandidateEnv for DeadlineBandit {
    fn evaluate(&mut self, action: f64, alpha_tilde: f64) -> Feedback {
        let t_dev = self.slope * action;
        let violation = (t_dev - self.t_max).max(0.0);
        let base = 1.0 - (action - self.peak).powi(2);
        Feedback {
            reward: super::shaped_reward(base, 0.0, 1.0, 0.0, alpha_tilde, t_dev, self.t_max),
            next_state: [0.0, 0.0],
            violation,
        }
    }
}
