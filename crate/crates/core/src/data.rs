//! Four-class 16x16 synthetic images: oriented bar, checkerboard, blob, ring.
//!
//! Each class is drawn with random geometry, random contrast and additive
//! Gaussian pixel noise, then clipped to `[0, 1]`. A fraction of labels can be
//! flipped to a different class, independently in each split.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SwdError};
use crate::rng::SeededRng;
use crate::tensor::Tensor4;

pub const CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; CLASSES] = ["bar", "checkerboard", "blob", "ring"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub seed: u64,
    pub train: usize,
    pub test: usize,
    pub size: usize,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
    /// Probability that a label is replaced by a different class.
    pub label_noise: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 256,
            test: 1024,
            size: 16,
            noise: 0.4,
            label_noise: 0.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train == 0 || self.test == 0 {
            return Err(SwdError::InvalidConfig("train and test counts must be positive".into()));
        }
        if self.size < 8 {
            return Err(SwdError::InvalidConfig(format!("image size {} below 8", self.size)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(SwdError::InvalidConfig(format!("noise {} must be >= 0", self.noise)));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(SwdError::InvalidConfig(format!(
                "label_noise {} outside [0, 1)",
                self.label_noise
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Tensor4,
    pub labels: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor4, Vec<usize>) {
        let [_, c, h, w] = self.images.shape();
        let plane = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * plane);
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * plane..(i + 1) * plane]);
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (Tensor4::new([indices.len(), c, h, w], data).expect("gather shape"), labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: DatasetSpec,
    pub train: Split,
    pub test: Split,
}

impl SyntheticDataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        spec.validate()?;
        let root = SeededRng::new(spec.seed);
        Ok(Self {
            train: make_split(spec, spec.train, &mut root.derive(1)),
            test: make_split(spec, spec.test, &mut root.derive(2)),
            spec: spec.clone(),
        })
    }

    /// Samples per label in `split`.
    pub fn class_counts(split: &Split) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &split.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Class `i % 4` for sample `i`, in shuffled order, so every class gets
/// `n / 4` or `n / 4 + 1` samples.
fn make_split(spec: &DatasetSpec, n: usize, rng: &mut SeededRng) -> Split {
    let mut classes: Vec<usize> = (0..n).map(|i| i % CLASSES).collect();
    rng.shuffle(&mut classes);
    let s = spec.size;
    let mut data = Vec::with_capacity(n * s * s);
    let mut labels = Vec::with_capacity(n);
    for &class in &classes {
        let img = render(class, s, spec.noise, rng);
        data.extend(img);
        let label = if spec.label_noise > 0.0 && rng.bernoulli(spec.label_noise) {
            (class + 1 + rng.below(CLASSES - 1)) % CLASSES
        } else {
            class
        };
        labels.push(label);
    }
    Split {
        images: Tensor4::new([n, 1, s, s], data).expect("split shape"),
        labels,
    }
}

/// One clipped image of `class`.
pub fn render(class: usize, size: usize, noise: f64, rng: &mut SeededRng) -> Vec<f64> {
    let s = size as f64;
    let c = (s - 1.0) / 2.0;
    let cx = c + rng.uniform_range(-0.15, 0.15) * s;
    let cy = c + rng.uniform_range(-0.15, 0.15) * s;
    let contrast = rng.uniform_range(0.5, 1.0);
    let background = rng.uniform_range(0.0, 0.2);
    let shape: Box<dyn Fn(f64, f64) -> f64> = match class {
        0 => {
            let theta = rng.uniform_range(0.0, std::f64::consts::PI);
            let (st, ct) = theta.sin_cos();
            let half_len = rng.uniform_range(0.25, 0.45) * s;
            let half_width = rng.uniform_range(0.6, 1.4);
            Box::new(move |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                let along = dx * ct + dy * st;
                let across = -dx * st + dy * ct;
                soft_step(half_width - across.abs()) * soft_step(half_len - along.abs())
            })
        }
        1 => {
            let period = rng.uniform_range(3.0, 5.0);
            let (px, py) = (rng.uniform_range(0.0, period), rng.uniform_range(0.0, period));
            Box::new(move |x, y| {
                let a = ((x + px) / period * std::f64::consts::PI).sin();
                let b = ((y + py) / period * std::f64::consts::PI).sin();
                0.5 + 0.5 * (a * b).signum()
            })
        }
        2 => {
            let sigma = rng.uniform_range(1.5, 3.0);
            Box::new(move |x, y| {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                (-r2 / (2.0 * sigma * sigma)).exp()
            })
        }
        _ => {
            let radius = rng.uniform_range(0.2, 0.35) * s;
            let half_width = rng.uniform_range(0.6, 1.2);
            Box::new(move |x, y| {
                let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                soft_step(half_width - (r - radius).abs())
            })
        }
    };
    let mut out = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let v = background + contrast * shape(j as f64, i as f64) + noise * rng.normal();
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

/// Smooth 0-to-1 edge over about one pixel.
fn soft_step(d: f64) -> f64 {
    (0.5 + d).clamp(0.0, 1.0)
}
