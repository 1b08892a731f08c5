//! Bitflip mapping: flip every bit of every analyzed neuron for every
//! input and tally how often the resulting delta lands in a vulnerable range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AnalysisConfig;
use super::ranges::{Category, NeuronVulnerability};
use crate::error::{Error, Result};
use crate::fault::{bitflip_delta, BitIndex, WORD_LENGTH};
use crate::nn::{golden_traces, NetworkModel, NeuronRef};
use crate::tensor::Tensor;

const BITS: usize = WORD_LENGTH;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronTally {
    pub neuron: NeuronRef,
    /// Per bit: inputs for which the flip is vulnerable (semi included).
    pub vulnerable: Vec<u64>,
    /// Per bit: the semi-vulnerable part of `vulnerable`.
    pub semi: Vec<u64>,
}

impl NeuronTally {
    pub fn vulnerable_bits(&self) -> u64 {
        self.vulnerable.iter().sum()
    }

    pub fn semi_bits(&self) -> u64 {
        self.semi.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerTally {
    pub layer: usize,
    /// Index range into `VulnerabilityFactors::neurons`.
    pub first: usize,
    pub neurons: usize,
    pub vulnerable: u64,
    pub semi: u64,
}

/// Layer, neuron and bit vulnerability factors with their raw tallies.
/// Percentages are `100 * vulnerable / denominator` with denominators
/// `inputs * neurons * word_length`, `inputs * word_length` and `inputs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnerabilityFactors {
    pub inputs: u64,
    pub word_length: u32,
    pub layers: Vec<LayerTally>,
    pub neurons: Vec<NeuronTally>,
}

fn pct(num: u64, den: u64) -> f64 {
    100.0 * num as f64 / den as f64
}

impl VulnerabilityFactors {
    pub fn lvf(&self, layer: &LayerTally) -> f64 {
        pct(
            layer.vulnerable,
            self.inputs * layer.neurons as u64 * self.word_length as u64,
        )
    }

    pub fn lvf_semi(&self, layer: &LayerTally) -> f64 {
        pct(layer.semi, self.inputs * layer.neurons as u64 * self.word_length as u64)
    }

    pub fn nvf(&self, neuron: &NeuronTally) -> f64 {
        pct(neuron.vulnerable_bits(), self.inputs * self.word_length as u64)
    }

    pub fn bvf(&self, neuron: &NeuronTally, bit: usize) -> f64 {
        pct(neuron.vulnerable[bit], self.inputs)
    }

    pub fn layer(&self, layer: usize) -> Option<&LayerTally> {
        self.layers.iter().find(|l| l.layer == layer)
    }

    pub fn layer_neurons(&self, layer: &LayerTally) -> &[NeuronTally] {
        &self.neurons[layer.first..layer.first + layer.neurons]
    }
}

/// Groups `ranges` by layer and checks that each layer is complete and in
/// neuron order.
fn group_layers(model: &NetworkModel, ranges: &[NeuronVulnerability]) -> Result<Vec<(usize, usize, usize)>> {
    let mut groups: Vec<(usize, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < ranges.len() {
        let layer = ranges[i].neuron.layer;
        let len = model.surface(layer)?.len();
        for n in 0..len {
            match ranges.get(i + n) {
                Some(r) if r.neuron == NeuronRef::new(layer, n) => {}
                _ => return Err(Error::MissingRange { layer, neuron: n }),
            }
        }
        if groups.iter().any(|g| g.0 == layer) {
            return Err(Error::Config(format!("layer {layer} appears twice in the ranges")));
        }
        groups.push((layer, i, len));
        i += len;
    }
    Ok(groups)
}

pub fn bitflip_map(
    model: &NetworkModel,
    inputs: &Tensor,
    ranges: &[NeuronVulnerability],
    cfg: &AnalysisConfig,
) -> Result<VulnerabilityFactors> {
    cfg.validate()?;
    if inputs.shape().len() < 2 || inputs.batch_len() == 0 {
        return Err(Error::Empty("bitflip mapping needs at least one input".into()));
    }
    let groups = group_layers(model, ranges)?;
    let traces = golden_traces(model, inputs)?;
    let neurons: Vec<NeuronTally> = ranges
        .par_iter()
        .map(|nv| {
            let mut tally = NeuronTally {
                neuron: nv.neuron,
                vulnerable: vec![0; BITS],
                semi: vec![0; BITS],
            };
            for trace in &traces {
                let value = trace.neuron_value(model, nv.neuron);
                for bit in BitIndex::all() {
                    let b = bit.position() as usize;
                    match nv.categorize(bitflip_delta(value, bit).delta) {
                        Category::NonCritical => {}
                        Category::Critical => tally.vulnerable[b] += 1,
                        Category::SemiCritical => {
                            tally.vulnerable[b] += 1;
                            tally.semi[b] += 1;
                        }
                    }
                }
            }
            tally
        })
        .collect();
    let layers = groups
        .into_iter()
        .map(|(layer, first, len)| {
            let slice = &neurons[first..first + len];
            LayerTally {
                layer,
                first,
                neurons: len,
                vulnerable: slice.iter().map(NeuronTally::vulnerable_bits).sum(),
                semi: slice.iter().map(NeuronTally::semi_bits).sum(),
            }
        })
        .collect();
    Ok(VulnerabilityFactors {
        inputs: traces.len() as u64,
        word_length: cfg.word_length,
        layers,
        neurons,
    })
}
