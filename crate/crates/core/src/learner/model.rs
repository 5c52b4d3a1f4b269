//! Softmax classifier with an optional tanh hidden layer.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Layer sizes of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    /// Width of the optional tanh hidden layer.
    pub hidden: Option<usize>,
    pub classes: usize,
}

impl ModelShape {
    /// Length of the flat parameter vector.
    pub fn num_params(&self) -> usize {
        match self.hidden {
            None => self.classes * (self.input_dim + 1),
            Some(h) => h * (self.input_dim + 1) + self.classes * (h + 1),
        }
    }
}

/// Position of a model in the training schedule: global round, edge round, local step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub g: u32,
    pub k: u32,
    pub h: u32,
}

/// Flat parameter vector with its layer layout.
///
/// Without a hidden layer the layout is `W (classes x input)` then `b`. With
/// one it is `W1 (hidden x input)`, `b1`, `W2 (classes x hidden)`, `b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub shape: ModelShape,
    pub params: Vec<f64>,
    pub version: Version,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(shape: ModelShape) -> Self {
        ModelParams { shape, params: vec![0.0; shape.num_params()], version: Version::default() }
    }

    /// Zero output layer and, if present, a Gaussian hidden layer scaled by fan-in.
    pub fn init(shape: ModelShape, stream: StreamKey) -> Self {
        let mut m = Self::zeros(shape);
        if let Some(h) = shape.hidden {
            let std = (1.0 / shape.input_dim as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let mut rng = stream.rng();
            for w in &mut m.params[..h * shape.input_dim] {
                *w = normal.sample(&mut rng);
            }
        }
        m
    }

    /// Errors unless `other` has the same shape.
    pub fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        if self.shape != other.shape || self.params.len() != other.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), found: other.params.len() });
        }
        Ok(())
    }

    /// Errors unless the model accepts samples from `data`.
    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if self.shape.input_dim != data.dims {
            return Err(Error::ShapeMismatch { expected: self.shape.input_dim, found: data.dims });
        }
        if self.shape.classes != data.classes {
            return Err(Error::ShapeMismatch { expected: self.shape.classes, found: data.classes });
        }
        Ok(())
    }

    /// Writes the class scores of `x` into `logits`, and the hidden activations into `hidden`.
    fn forward(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let s = self.shape;
        let p = &self.params;
        match s.hidden {
            None => {
                let b = s.classes * s.input_dim;
                for (c, out) in logits.iter_mut().enumerate() {
                    let w = &p[c * s.input_dim..(c + 1) * s.input_dim];
                    *out = p[b + c] + dot(w, x);
                }
            }
            Some(h) => {
                let b1 = h * s.input_dim;
                let w2 = b1 + h;
                let b2 = w2 + s.classes * h;
                for (j, a) in hidden.iter_mut().enumerate() {
                    *a = (p[b1 + j] + dot(&p[j * s.input_dim..(j + 1) * s.input_dim], x)).tanh();
                }
                for (c, out) in logits.iter_mut().enumerate() {
                    *out = p[b2 + c] + dot(&p[w2 + c * h..w2 + (c + 1) * h], hidden);
                }
            }
        }
    }

    /// Class scores before the softmax.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut hidden = vec![0.0; self.shape.hidden.unwrap_or(0)];
        let mut out = vec![0.0; self.shape.classes];
        self.forward(x, &mut hidden, &mut out);
        out
    }

    /// Class probabilities.
    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    /// Mean cross-entropy over the samples at `idx`; accumulates its gradient into `grad`.
    pub fn loss_and_grad(&self, data: &Dataset, idx: &[usize], grad: &mut [f64]) -> f64 {
        let s = self.shape;
        grad.iter_mut().for_each(|g| *g = 0.0);
        if idx.is_empty() {
            return 0.0;
        }
        let inv = 1.0 / idx.len() as f64;
        let hw = s.hidden.unwrap_or(0);
        let mut hidden = vec![0.0; hw];
        let mut z = vec![0.0; s.classes];
        let mut dh = vec![0.0; hw];
        let mut loss = 0.0;
        for &i in idx {
            let x = data.row(i);
            let y = data.labels[i] as usize;
            self.forward(x, &mut hidden, &mut z);
            let lse = log_sum_exp(&z);
            loss += lse - z[y];
            for (c, zc) in z.iter_mut().enumerate() {
                *zc = ((*zc - lse).exp() - if c == y { 1.0 } else { 0.0 }) * inv;
            }
            match s.hidden {
                None => {
                    let b = s.classes * s.input_dim;
                    for c in 0..s.classes {
                        axpy(z[c], x, &mut grad[c * s.input_dim..(c + 1) * s.input_dim]);
                        grad[b + c] += z[c];
                    }
                }
                Some(h) => {
                    let b1 = h * s.input_dim;
                    let w2 = b1 + h;
                    let b2 = w2 + s.classes * h;
                    dh.iter_mut().for_each(|v| *v = 0.0);
                    for c in 0..s.classes {
                        axpy(z[c], &hidden, &mut grad[w2 + c * h..w2 + (c + 1) * h]);
                        grad[b2 + c] += z[c];
                        axpy(z[c], &self.params[w2 + c * h..w2 + (c + 1) * h], &mut dh);
                    }
                    for j in 0..h {
                        let d = dh[j] * (1.0 - hidden[j] * hidden[j]);
                        axpy(d, x, &mut grad[j * s.input_dim..(j + 1) * s.input_dim]);
                        grad[b1 + j] += d;
                    }
                }
            }
        }
        loss * inv
    }

    /// Mean cross-entropy over the samples at `idx`.
    pub fn loss(&self, data: &Dataset, idx: &[usize]) -> f64 {
        let mut g = vec![0.0; self.params.len()];
        self.loss_and_grad(data, idx, &mut g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Numerically stable `ln(sum(exp(z)))`.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Replaces scores by their softmax probabilities.
pub fn softmax_in_place(z: &mut [f64]) {
    let lse = log_sum_exp(z);
    z.iter_mut().for_each(|v| *v = (*v - lse).exp());
}
