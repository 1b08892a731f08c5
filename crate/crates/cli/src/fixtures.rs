//! The pinned fixture zoo: three MNIST-subset networks and one synthetic MLP.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use vrange_core::model_io::{
    accuracy, save_model, split_indices, train_fixture, write_manifest, Architecture, LayerTemplate, TrainConfig,
};

use crate::config::parse_data;
use crate::manifest::{file_hash, write_json};

/// Seed of the train/test/analysis splits.
pub const SPLIT_SEED: u64 = 2023;
pub const SYNTHETIC_DATA: &str = "synthetic:classes=3,dim=2,per_class=300,sep=3,seed=11";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Mnist,
    Synthetic,
}

impl DataKind {
    pub fn prefix(self) -> &'static str {
        match self {
            DataKind::Mnist => "mnist",
            DataKind::Synthetic => "synthetic",
        }
    }

    /// (train, test, set1, set2) sizes.
    fn sizes(self) -> (usize, usize, usize, usize) {
        match self {
            DataKind::Mnist => (2000, 500, 200, 200),
            DataKind::Synthetic => (600, 300, 200, 200),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FixtureDef {
    pub name: &'static str,
    pub data: DataKind,
    pub arch: Architecture,
    pub train: TrainConfig,
}

fn mlp(activation: LayerTemplate) -> Vec<LayerTemplate> {
    vec![
        LayerTemplate::Flatten,
        LayerTemplate::Dense { out_features: 64 },
        activation,
        LayerTemplate::Dense { out_features: 32 },
        activation,
        LayerTemplate::Dense { out_features: 10 },
    ]
}

fn train(name: &str, seed: u64, epochs: usize, learning_rate: f32) -> TrainConfig {
    TrainConfig {
        name: name.into(),
        seed,
        epochs,
        learning_rate,
        batch_size: 32,
    }
}

pub fn zoo() -> Vec<FixtureDef> {
    let mnist = |layers| Architecture {
        input_shape: vec![1, 28, 28],
        num_classes: 10,
        layers,
    };
    vec![
        FixtureDef {
            name: "mlp-relu",
            data: DataKind::Mnist,
            arch: mnist(mlp(LayerTemplate::Relu)),
            train: train("mlp-relu", 1, 30, 0.1),
        },
        FixtureDef {
            name: "mlp-sigmoid",
            data: DataKind::Mnist,
            arch: mnist(mlp(LayerTemplate::Sigmoid)),
            train: train("mlp-sigmoid", 2, 30, 0.5),
        },
        FixtureDef {
            name: "lenet",
            data: DataKind::Mnist,
            arch: mnist(vec![
                LayerTemplate::Conv2d {
                    out_channels: 4,
                    kernel: 5,
                    stride: 1,
                    padding: 0,
                },
                LayerTemplate::Relu,
                LayerTemplate::MaxPool2d { kernel: 2, stride: 2 },
                LayerTemplate::Conv2d {
                    out_channels: 8,
                    kernel: 5,
                    stride: 1,
                    padding: 0,
                },
                LayerTemplate::Relu,
                LayerTemplate::MaxPool2d { kernel: 2, stride: 2 },
                LayerTemplate::Flatten,
                LayerTemplate::Dense { out_features: 32 },
                LayerTemplate::Relu,
                LayerTemplate::Dense { out_features: 10 },
            ]),
            train: train("lenet", 3, 15, 0.05),
        },
        FixtureDef {
            name: "synthetic",
            data: DataKind::Synthetic,
            arch: Architecture {
                input_shape: vec![2],
                num_classes: 3,
                layers: vec![
                    LayerTemplate::Dense { out_features: 16 },
                    LayerTemplate::Relu,
                    LayerTemplate::Dense { out_features: 16 },
                    LayerTemplate::Relu,
                    LayerTemplate::Dense { out_features: 3 },
                ],
            },
            train: train("synthetic", 4, 40, 0.05),
        },
    ]
}

pub fn find(name: &str) -> Result<FixtureDef> {
    zoo()
        .into_iter()
        .find(|f| f.name == name)
        .with_context(|| format!("unknown fixture `{name}`"))
}

#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub name: String,
    pub model: PathBuf,
    pub model_hash: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Location of a split manifest, e.g. `fixtures/mnist-set1.txt`.
pub fn manifest_path(dir: &Path, kind: DataKind, split: &str) -> PathBuf {
    dir.join(format!("{}-{split}.txt", kind.prefix()))
}

/// Trains the named fixtures (all when `names` is empty) and writes models
/// and split manifests to `out`. `mnist_dir` holds the IDX pair.
pub fn cmd_fixture(out: &Path, mnist_dir: &Path, names: &[String]) -> Result<Vec<FixtureReport>> {
    let defs: Vec<FixtureDef> = if names.is_empty() {
        zoo()
    } else {
        names.iter().map(|n| find(n)).collect::<Result<_>>()?
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut reports = Vec::new();
    for def in defs {
        let spec = match def.data {
            DataKind::Mnist => mnist_dir.to_string_lossy().into_owned(),
            DataKind::Synthetic => SYNTHETIC_DATA.to_string(),
        };
        let data = parse_data(&spec)?.load()?;
        let (n_train, n_test, n1, n2) = def.data.sizes();
        let (train_idx, test_idx) = split_indices(data.len(), n_train, n_test, SPLIT_SEED)?;
        let origin = format!("{} split, seed {SPLIT_SEED}", def.data.prefix());
        for (split, idx) in [
            ("train", &train_idx[..]),
            ("test", &test_idx[..]),
            ("set1", &train_idx[..n1]),
            ("set2", &test_idx[..n2]),
        ] {
            write_manifest(manifest_path(out, def.data, split), &format!("{origin}: {split}"), idx)?;
        }
        let train_set = data.subset(&train_idx)?;
        let test_set = data.subset(&test_idx)?;
        let mut model = train_fixture(&def.arch, &train_set, &def.train)
            .with_context(|| format!("training fixture `{}`", def.name))?;
        let test_accuracy = accuracy(&model, &test_set)?;
        if let Some(meta) = model.metadata.as_mut() {
            meta.test_accuracy = Some(test_accuracy);
        }
        let path = out.join(format!("{}.vrm", def.name));
        save_model(&model, &path)?;
        reports.push(FixtureReport {
            name: def.name.into(),
            model_hash: file_hash(&path)?,
            model: path,
            train_accuracy: model.metadata.as_ref().map_or(0.0, |m| m.train_accuracy),
            test_accuracy,
        });
    }
    if reports.is_empty() {
        bail!("no fixtures selected");
    }
    write_json(&out.join("fixtures.json"), &reports)?;
    Ok(reports)
}
