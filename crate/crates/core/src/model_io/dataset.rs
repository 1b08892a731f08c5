use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::idx::load_idx;
use super::synthetic::{gen_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labelled classification data; `inputs` carries a leading batch dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub id: String,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(id: impl Into<String>, inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.shape().len() < 2 || inputs.batch_len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} inputs vs {} labels",
                inputs.shape().first().copied().unwrap_or(0),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!("label {bad} outside 0..{num_classes}")));
        }
        Ok(Self {
            id: id.into(),
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f32] {
        self.inputs.item(i)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let labels = indices
            .iter()
            .map(|&i| {
                self.labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Dataset(format!("index {i} outside dataset of {}", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            id: self.id.clone(),
            inputs: self.inputs.select(indices)?,
            labels,
            num_classes: self.num_classes,
        })
    }
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Idx { images: PathBuf, labels: PathBuf },
    Synthetic(SyntheticSpec),
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Idx { images, labels } => load_idx(images, labels),
            DatasetSource::Synthetic(spec) => gen_synthetic(spec),
        }
    }
}

/// Seeded permutation of `0..n` cut into a `train`-long and a `test`-long
/// disjoint prefix.
pub fn split_indices(n: usize, train: usize, test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    if train + test > n {
        return Err(Error::Dataset(format!("cannot take {train} + {test} items from {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let test_part = order[train..train + test].to_vec();
    order.truncate(train);
    Ok((order, test_part))
}

/// Reads a subset manifest: one dataset index per line; blank lines and
/// `#` comments are ignored.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn parse_manifest(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap().trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.parse::<usize>()
                .map_err(|_| Error::Dataset(format!("bad manifest entry `{l}`")))
        })
        .collect()
}

pub fn write_manifest(path: impl AsRef<Path>, comment: &str, indices: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for line in comment.lines() {
        text.push_str("# ");
        text.push_str(line);
        text.push('\n');
    }
    for i in indices {
        text.push_str(&i.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("set.txt");
        write_manifest(&path, "analysis set\nseed 1", &[4, 0, 17]).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), vec![4, 0, 17]);
        assert!(parse_manifest("1\nx\n").is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = split_indices(50, 30, 20, 4).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, (0..50).collect::<Vec<_>>());
        assert_eq!(split_indices(50, 30, 20, 4).unwrap(), (a, b));
        assert!(split_indices(10, 6, 5, 0).is_err());
    }

    #[test]
    fn subset_and_label_checks() {
        let inputs = Tensor::new(vec![3, 2], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let ds = Dataset::new("t", inputs.clone(), vec![0, 1, 1], 2).unwrap();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.labels, vec![1, 0]);
        assert_eq!(sub.input(0), &[4., 5.]);
        assert!(ds.subset(&[3]).is_err());
        assert!(Dataset::new("t", inputs.clone(), vec![0, 2, 1], 2).is_err());
        assert!(Dataset::new("t", inputs, vec![0, 1], 2).is_err());
    }
}
