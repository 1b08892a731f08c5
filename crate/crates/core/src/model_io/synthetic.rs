//! Gaussian-blob classification data.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub samples_per_class: usize,
    pub cluster_separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn id(&self) -> String {
        format!(
            "synthetic-c{}-d{}-n{}-s{}-seed{}",
            self.num_classes, self.input_dim, self.samples_per_class, self.cluster_separation, self.seed
        )
    }
}

fn class_rng(seed: u64, class: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class as u64 + 1);
    rng
}

/// Center of class `c`: evenly spaced on a circle of radius `separation`
/// (rotated by a seed-derived angle) in the first two coordinates, with
/// seed-derived offsets of scale `separation / 4` in any further coordinates.
/// One-dimensional data puts the centers `separation` apart on a line.
fn center(spec: &SyntheticSpec, c: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sep = spec.cluster_separation;
    if spec.input_dim == 1 {
        return vec![sep * (c as f64 - (spec.num_classes as f64 - 1.0) / 2.0)];
    }
    let phase = ChaCha8Rng::seed_from_u64(spec.seed).random::<f64>() * TAU;
    let angle = phase + TAU * c as f64 / spec.num_classes as f64;
    let mut v = vec![sep * angle.cos(), sep * angle.sin()];
    v.extend((2..spec.input_dim).map(|_| 0.25 * sep * rng.sample::<f64, _>(StandardNormal)));
    v
}

/// Class-major samples: class `c` draws `center_c + N(0, I)`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::Dataset("synthetic data needs at least 2 classes".into()));
    }
    if spec.input_dim == 0 || spec.samples_per_class == 0 {
        return Err(Error::Dataset("synthetic sizes must be positive".into()));
    }
    if !(spec.cluster_separation.is_finite() && spec.cluster_separation > 0.0) {
        return Err(Error::Dataset("cluster separation must be positive".into()));
    }
    let n = spec.num_classes * spec.samples_per_class;
    let mut data = Vec::with_capacity(n * spec.input_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.num_classes {
        let mut rng = class_rng(spec.seed, c);
        let mu = center(spec, c, &mut rng);
        for _ in 0..spec.samples_per_class {
            for m in &mu {
                data.push((m + rng.sample::<f64, _>(StandardNormal)) as f32);
            }
            labels.push(c);
        }
    }
    Dataset::new(
        spec.id(),
        Tensor::new(vec![n, spec.input_dim], data)?,
        labels,
        spec.num_classes,
    )
}
