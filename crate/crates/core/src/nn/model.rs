use serde::{Deserialize, Serialize};

use super::layer::{LayerKind, LayerSpec};
use crate::error::{Error, Result};

/// Provenance recorded when a model is produced by training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMetadata {
    pub name: String,
    pub seed: u64,
    pub dataset: String,
    pub epochs: usize,
    pub learning_rate: f32,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// A layer output that counts as a surface of analyzable neurons: the output
/// of a dense or convolutional layer, taken after the activation that
/// immediately follows it (if any).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Surface {
    /// Index of the layer whose output holds the neuron values.
    pub layer: usize,
    /// Index of the dense/conv layer that produces the surface.
    pub source: usize,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
}

impl Surface {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Address of one scalar neuron output: a surface index and a flat
/// (channel, row, column)-major position inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronRef {
    pub layer: usize,
    pub neuron: usize,
}

impl NeuronRef {
    pub fn new(layer: usize, neuron: usize) -> Self {
        Self { layer, neuron }
    }
}

/// Feed-forward classifier ending in a vector of logits.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    input_shape: Vec<usize>,
    num_classes: usize,
    layers: Vec<LayerSpec>,
    /// `shapes[0]` is the input shape; `shapes[i + 1]` is the output of layer `i`.
    shapes: Vec<Vec<usize>>,
    surfaces: Vec<Surface>,
    pub metadata: Option<TrainingMetadata>,
}

impl NetworkModel {
    pub fn new(input_shape: Vec<usize>, num_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Shape(format!("need at least 2 classes, got {num_classes}")));
        }
        if layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let out = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::Shape(format!("layer {i} ({}): {e}", layer.kind().name())))?;
            shapes.push(out);
        }
        let last = shapes.last().unwrap();
        if last.as_slice() != [num_classes] {
            return Err(Error::Shape(format!(
                "model declares {num_classes} classes but the last layer outputs {last:?}"
            )));
        }
        let mut surfaces = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            if matches!(layer.kind(), LayerKind::Dense | LayerKind::Conv2d) {
                let at = if layers.get(i + 1).is_some_and(LayerSpec::is_activation) {
                    i + 1
                } else {
                    i
                };
                surfaces.push(Surface {
                    layer: at,
                    source: i,
                    kind: layer.kind(),
                    shape: shapes[at + 1].clone(),
                });
            }
        }
        Ok(Self {
            input_shape,
            num_classes,
            layers,
            shapes,
            surfaces,
            metadata: None,
        })
    }

    pub fn with_metadata(mut self, metadata: TrainingMetadata) -> Self {
        self.metadata = Some(metadata);
        self
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerSpec] {
        &mut self.layers
    }

    /// Per-sample input shape of layer `i`.
    pub fn layer_input_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    /// Per-sample output shape of layer `i`.
    pub fn layer_output_shape(&self, i: usize) -> &[usize] {
        &self.shapes[i + 1]
    }

    pub fn layer_output_len(&self, i: usize) -> usize {
        self.shapes[i + 1].iter().product()
    }

    pub fn surfaces(&self) -> &[Surface] {
        &self.surfaces
    }

    pub fn surface(&self, index: usize) -> Result<&Surface> {
        self.surfaces.get(index).ok_or_else(|| {
            Error::Addressing(format!(
                "layer {index} out of range ({} analyzable layers)",
                self.surfaces.len()
            ))
        })
    }

    /// True when the surface is the logit vector itself.
    pub fn is_output_surface(&self, index: usize) -> bool {
        self.surfaces
            .get(index)
            .is_some_and(|s| s.layer + 1 == self.layers.len())
    }

    pub fn check_neuron(&self, neuron: NeuronRef) -> Result<&Surface> {
        let surface = self.surface(neuron.layer)?;
        if neuron.neuron >= surface.len() {
            return Err(Error::Addressing(format!(
                "neuron {} out of range for layer {} with {} outputs",
                neuron.neuron,
                neuron.layer,
                surface.len()
            )));
        }
        Ok(surface)
    }

    /// Short human-readable name of a surface, e.g. `conv1` or `fc2`.
    pub fn surface_name(&self, index: usize) -> String {
        match self.surfaces.get(index) {
            Some(s) => {
                let ordinal = self.surfaces[..index].iter().filter(|o| o.kind == s.kind).count();
                format!(
                    "{}{}",
                    if s.kind == LayerKind::Conv2d { "conv" } else { "fc" },
                    ordinal + 1
                )
            }
            None => format!("layer{index}"),
        }
    }
}
