//! Synthetic non-iid datasets and their binary dump format.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Labeled samples held by one device, one UAV, or the evaluator.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Feature dimension.
    pub dims: usize,
    /// Number of classes labels are drawn from.
    pub classes: usize,
    /// Row-major features, `len() * dims` values.
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    /// Owning device id, if any.
    pub owner: Option<usize>,
}

impl Dataset {
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Whether there are no samples.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature row of sample `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    /// Checks that row counts match and labels are in range.
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() * self.dims {
            return Err(Error::ShapeMismatch { expected: self.labels.len() * self.dims, found: self.features.len() });
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.classes) {
            return Err(Error::Domain(format!("label {l} outside {} classes", self.classes)));
        }
        Ok(())
    }

    /// Sorted distinct labels present.
    pub fn label_set(&self) -> Vec<u32> {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// The first `n` samples in a deterministic shuffled order.
    pub fn subset(&self, n: usize, stream: StreamKey) -> Dataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut stream.rng());
        idx.truncate(n.min(self.len()));
        self.select(&idx)
    }

    /// Samples at the given indices.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            dims: self.dims,
            classes: self.classes,
            features: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            owner: self.owner,
        }
    }

    /// Writes the dataset in the `HFLD` binary format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        for v in [DUMP_VERSION, self.len() as u32, self.dims as u32, self.classes as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &x in &self.features {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        for &l in &self.labels {
            w.write_all(&l.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dataset in the `HFLD` binary format. Features come back rounded to `f32`.
    pub fn read_from<R: Read>(mut r: R) -> Result<Dataset> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Io("bad dataset magic".into()));
        }
        let mut word = || -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = word()?;
        if version != DUMP_VERSION {
            return Err(Error::Io(format!("unsupported dataset version {version}")));
        }
        let (n, dims, classes) = (word()? as usize, word()? as usize, word()? as usize);
        let features = (0..n * dims).map(|_| word().map(|b| f32::from_bits(b) as f64)).collect::<Result<_>>()?;
        let labels = (0..n).map(|_| word()).collect::<Result<_>>()?;
        let d = Dataset { dims, classes, features, labels, owner: None };
        d.validate()?;
        Ok(d)
    }
}

const DUMP_MAGIC: &[u8; 4] = b"HFLD";
const DUMP_VERSION: u32 = 1;

/// Label skew across devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Every device holds exactly two classes.
    A,
    /// Every device holds a uniformly drawn number of classes in `2..=10`.
    B,
}

/// Gaussian class clusters with means evenly spaced on a circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub classes: usize,
    /// Distance of each class mean from the origin.
    pub radius: f64,
    /// Per-coordinate standard deviation around the mean.
    pub std: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec { classes: 10, radius: 4.0, std: 0.5 }
    }
}

impl ClusterSpec {
    /// Mean of class `c`.
    pub fn mean(&self, c: usize) -> [f64; 2] {
        let t = std::f64::consts::TAU * c as f64 / self.classes as f64;
        [self.radius * t.cos(), self.radius * t.sin()]
    }

    fn sample<R: Rng>(&self, rng: &mut R, label: usize, out: &mut Vec<f64>) {
        let noise = Normal::new(0.0, self.std).expect("std is non-negative");
        let m = self.mean(label);
        out.push(m[0] + noise.sample(rng));
        out.push(m[1] + noise.sample(rng));
    }

    /// Samples with the given labels.
    pub fn generate<R: Rng>(&self, rng: &mut R, labels: Vec<u32>, owner: Option<usize>) -> Dataset {
        let mut features = Vec::with_capacity(labels.len() * 2);
        for &l in &labels {
            self.sample(rng, l as usize, &mut features);
        }
        Dataset { dims: 2, classes: self.classes, features, labels, owner }
    }

    /// `n` samples cycling through the classes in order.
    pub fn balanced(&self, n: usize, stream: StreamKey) -> Dataset {
        let labels = (0..n).map(|i| (i % self.classes) as u32).collect();
        self.generate(&mut stream.rng(), labels, None)
    }
}

/// Per-device datasets with label skew given by `scheme`.
///
/// Every device gets `samples_per_device` samples split as evenly as possible
/// among its classes, so the total is the same under both schemes.
pub fn synth_noniid(
    n_devices: usize,
    scheme: Scheme,
    samples_per_device: usize,
    spec: &ClusterSpec,
    stream: StreamKey,
) -> Result<Vec<Dataset>> {
    if n_devices == 0 {
        return Err(Error::Empty("device count"));
    }
    if spec.classes < 2 {
        return Err(Error::Domain("at least two classes are required".into()));
    }
    let max_k = spec.classes.min(10);
    Ok((0..n_devices)
        .map(|n| {
            let mut rng = stream.child(n as u64).rng();
            let k = match scheme {
                Scheme::A => 2,
                Scheme::B => rng.random_range(2..=max_k),
            }
            .min(samples_per_device.max(1));
            let mut classes: Vec<u32> = (0..spec.classes as u32).collect();
            classes.shuffle(&mut rng);
            classes.truncate(k);
            classes.sort_unstable();
            let labels = (0..samples_per_device).map(|i| classes[i % k]).collect();
            spec.generate(&mut rng, labels, Some(n))
        })
        .collect())
}
