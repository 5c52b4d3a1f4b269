//! Dense feed-forward networks with tanh hidden layers, and the Adam optimizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Activation of the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutAct {
    Sigmoid,
    Linear,
}

/// Fully connected network stored as one flat parameter vector.
///
/// Layer `l` stores its weights row-major (`out x in`) followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub out: OutAct,
    pub params: Vec<f64>,
}

/// Layer activations recorded by [`Mlp::forward_cache`].
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    /// Network output.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Mlp {
    /// Glorot-uniform hidden layers and a small uniform output layer.
    pub fn new<R: Rng>(sizes: &[usize], out: OutAct, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = if l == last { 3e-3 } else { (6.0 / (w[0] + w[1]) as f64).sqrt() };
            for _ in 0..w[0] * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Mlp { sizes: sizes.to_vec(), out, params }
    }

    /// Number of parameters.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    /// Whether the network has no parameters.
    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Output for input `x`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cache(x).acts.pop().expect("output layer")
    }

    /// Output for input `x`, keeping every layer's activations for [`Mlp::backward`].
    pub fn forward_cache(&self, x: &[f64]) -> Cache {
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        let mut off = 0;
        let layers = self.sizes.len() - 1;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &acts[l];
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z: Vec<f64> = (0..n_out)
                .map(|j| b[j] + w[j * n_in..(j + 1) * n_in].iter().zip(input).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            } else if self.out == OutAct::Sigmoid {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            }
            off += n_out * (n_in + 1);
            acts.push(z);
        }
        Cache { acts }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the output), adding parameter gradients to `grad`.
    ///
    /// Returns the gradient with respect to the input.
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        let mut delta: Vec<f64> = d_out.to_vec();
        if self.out == OutAct::Sigmoid {
            for (d, y) in delta.iter_mut().zip(&cache.acts[layers]) {
                *d *= y * (1.0 - y);
            }
        }
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for j in 0..n_out {
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += delta[j] * x;
                }
                grad[off + n_in * n_out + j] += delta[j];
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut d_in = vec![0.0; n_in];
            for j in 0..n_out {
                for (i, d) in d_in.iter_mut().enumerate() {
                    *d += w[j * n_in + i] * delta[j];
                }
            }
            if l > 0 {
                for (d, a) in d_in.iter_mut().zip(input) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = d_in;
        }
        delta
    }

    /// `self <- tau * src + (1 - tau) * self`.
    pub fn blend_from(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.params.iter_mut().zip(&src.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    /// Fresh state for `n` parameters.
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}
