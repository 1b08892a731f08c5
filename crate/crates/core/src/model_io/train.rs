//! Plain mini-batch SGD on softmax cross-entropy, used to produce the
//! fixture models. Single-threaded so that weights are a pure function of
//! the seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{
    predicted_class, BatchNorm, Conv2d, Dense, Executor, LayerSpec, MaxPool2d, NetworkModel, TrainingMetadata,
};

/// A layer without weights; sizes that follow from the input are inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerTemplate {
    Dense {
        out_features: usize,
    },
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    BatchNorm,
    Relu,
    Sigmoid,
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
    pub layers: Vec<LayerTemplate>,
}

impl Architecture {
    /// Random weights: He-normal for layers feeding a ReLU, LeCun-normal
    /// otherwise; zero biases.
    pub fn initialize(&self, seed: u64) -> Result<NetworkModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shape = self.input_shape.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, t) in self.layers.iter().enumerate() {
            let gain = match self.layers.get(i + 1) {
                Some(LayerTemplate::Relu) => 2.0,
                _ => 1.0,
            };
            let mut normal = |n: usize, fan_in: usize| -> Vec<f32> {
                let std = (gain / fan_in as f64).sqrt();
                (0..n)
                    .map(|_| (std * rng.sample::<f64, _>(StandardNormal)) as f32)
                    .collect()
            };
            let spec = match *t {
                LayerTemplate::Dense { out_features } => {
                    let in_features: usize = shape.iter().product();
                    LayerSpec::Dense(Dense {
                        in_features,
                        out_features,
                        weight: normal(in_features * out_features, in_features),
                        bias: vec![0.0; out_features],
                    })
                }
                LayerTemplate::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let in_channels = shape.first().copied().unwrap_or(0);
                    let fan_in = in_channels * kernel * kernel;
                    LayerSpec::Conv2d(Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                        stride,
                        padding,
                        weight: normal(out_channels * fan_in, fan_in.max(1)),
                        bias: vec![0.0; out_channels],
                    })
                }
                LayerTemplate::MaxPool2d { kernel, stride } => LayerSpec::MaxPool2d(MaxPool2d { kernel, stride }),
                LayerTemplate::BatchNorm => {
                    let c = shape.first().copied().unwrap_or(0);
                    LayerSpec::BatchNorm(BatchNorm {
                        channels: c,
                        gamma: vec![1.0; c],
                        beta: vec![0.0; c],
                        mean: vec![0.0; c],
                        var: vec![1.0; c],
                        eps: 1e-5,
                    })
                }
                LayerTemplate::Relu => LayerSpec::Relu,
                LayerTemplate::Sigmoid => LayerSpec::Sigmoid,
                LayerTemplate::Flatten => LayerSpec::Flatten,
            };
            shape = spec.output_shape(&shape)?;
            layers.push(spec);
        }
        NetworkModel::new(self.input_shape.clone(), self.num_classes, layers)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub name: String,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f32,
    pub batch_size: usize,
}

/// Softmax cross-entropy of `logits` against `label`, and its gradient.
fn cross_entropy(logits: &[f32], label: usize, grad: &mut [f32]) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let sum: f64 = logits.iter().map(|&z| (z as f64 - max).exp()).sum();
    for (j, (g, &z)) in grad.iter_mut().zip(logits).enumerate() {
        let p = (z as f64 - max).exp() / sum;
        *g = (p - if j == label { 1.0 } else { 0.0 }) as f32;
    }
    sum.ln() + max - logits[label] as f64
}

pub fn train_fixture(arch: &Architecture, data: &Dataset, cfg: &TrainConfig) -> Result<NetworkModel> {
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if data.inputs.item_shape() != arch.input_shape.as_slice() || data.num_classes != arch.num_classes {
        return Err(Error::Shape(format!(
            "dataset items {:?} / {} classes do not fit architecture {:?} / {} classes",
            data.inputs.item_shape(),
            data.num_classes,
            arch.input_shape,
            arch.num_classes
        )));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let mut model = arch.initialize(cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let n_layers = model.layers().len();
    let sizes: Vec<usize> = (0..n_layers).map(|i| model.layer_output_len(i)).collect();
    let mut acts: Vec<Vec<f32>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut deltas: Vec<Vec<f32>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut grads: Vec<Vec<Vec<f32>>> = model
        .layers()
        .iter()
        .map(|l| l.trainable_lens().into_iter().map(|n| vec![0.0; n]).collect())
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            grads.iter_mut().flatten().for_each(|g| g.fill(0.0));
            for &i in batch {
                let input = data.input(i);
                for j in 0..n_layers {
                    let (before, after) = acts.split_at_mut(j);
                    let src: &[f32] = if j == 0 { input } else { &before[j - 1] };
                    model.layers()[j].forward(model.layer_input_shape(j), src, &mut after[0]);
                }
                epoch_loss += cross_entropy(&acts[n_layers - 1], data.labels[i], &mut deltas[n_layers - 1]);
                for j in (0..n_layers).rev() {
                    let src: &[f32] = if j == 0 { input } else { &acts[j - 1] };
                    let layer = &model.layers()[j];
                    layer.accumulate_param_grads(model.layer_input_shape(j), src, &deltas[j], &mut grads[j]);
                    if j > 0 {
                        let (before, after) = deltas.split_at_mut(j);
                        layer.backward_input(model.layer_input_shape(j), src, &acts[j], &after[0], &mut before[j - 1]);
                    }
                }
            }
            let step = cfg.learning_rate / batch.len() as f32;
            for (layer, g) in model.layers_mut().iter_mut().zip(&grads) {
                for (param, g) in layer.trainable_mut().into_iter().zip(g) {
                    for (p, d) in param.iter_mut().zip(g) {
                        *p -= step * d;
                    }
                }
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
    }

    let train_accuracy = accuracy(&model, data)?;
    Ok(model.with_metadata(TrainingMetadata {
        name: cfg.name.clone(),
        seed: cfg.seed,
        dataset: data.id.clone(),
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        train_accuracy,
        test_accuracy: None,
    }))
}

/// Fraction of `data` whose predicted class equals the label.
pub fn accuracy(model: &NetworkModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("accuracy over an empty dataset".into()));
    }
    let correct: usize = (0..data.len())
        .into_par_iter()
        .map_init(
            || Executor::new(model),
            |exec, i| -> Result<usize> {
                let trace = exec.trace(data.input(i))?;
                Ok(usize::from(predicted_class(trace.logits()) == Some(data.labels[i])))
            },
        )
        .sum::<Result<usize>>()?;
    Ok(correct as f64 / data.len() as f64)
}
