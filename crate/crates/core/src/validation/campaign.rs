//! Statistical fault-injection campaigns against computed ranges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::{bitflip_delta, required_faults, sample_faults, BitflipDelta, FaultSpec, WORD_LENGTH};
use crate::model_io::Dataset;
use crate::nn::{golden_traces, predicted_class, Executor, Injection, NetworkModel};
use crate::vigor::{Category, NeuronVulnerability};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Masked,
    Misclassified,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Masked => "masked",
            Outcome::Misclassified => "misclassified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultRecord {
    pub spec: FaultSpec,
    pub delta: BitflipDelta,
    pub category: Category,
    pub outcome: Outcome,
    /// Whether the golden and the faulty run match the true label.
    pub golden_correct: bool,
    pub faulty_correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub masked: u64,
    pub misclassified: u64,
}

impl OutcomeCounts {
    pub fn total(&self) -> u64 {
        self.masked + self.misclassified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub layer: usize,
    pub seed: u64,
    pub faults: Vec<FaultRecord>,
}

impl CampaignResult {
    pub fn counts(&self, category: Category) -> OutcomeCounts {
        let mut c = OutcomeCounts::default();
        for f in self.faults.iter().filter(|f| f.category == category) {
            match f.outcome {
                Outcome::Masked => c.masked += 1,
                Outcome::Misclassified => c.misclassified += 1,
            }
        }
        c
    }

    /// Accuracy against true labels over the campaign's inputs, golden and
    /// under fault, as fractions.
    pub fn accuracies(&self) -> (f64, f64) {
        let n = self.faults.len() as f64;
        let golden = self.faults.iter().filter(|f| f.golden_correct).count() as f64;
        let faulty = self.faults.iter().filter(|f| f.faulty_correct).count() as f64;
        (golden / n, faulty / n)
    }

    /// Golden minus faulty accuracy, in percentage points.
    pub fn accuracy_loss_pct(&self) -> f64 {
        let (g, f) = self.accuracies();
        100.0 * (g - f)
    }
}

/// Category of a bitflip against its neuron's ranges.
pub fn categorize_fault(delta: &BitflipDelta, nv: &NeuronVulnerability) -> Category {
    nv.categorize(delta.delta)
}

/// Runs `required_faults(32 * neurons)` single-bitflip faults on surface
/// `layer`, each on a uniformly drawn input of `data`. `ranges` must hold
/// the layer's neurons in order.
pub fn run_campaign(
    model: &NetworkModel,
    data: &Dataset,
    layer: usize,
    ranges: &[NeuronVulnerability],
    seed: u64,
) -> Result<CampaignResult> {
    let neurons = model.surface(layer)?.len();
    for n in 0..neurons {
        match ranges.get(n) {
            Some(r) if r.neuron.layer == layer && r.neuron.neuron == n => {}
            _ => return Err(Error::MissingRange { layer, neuron: n }),
        }
    }
    if data.is_empty() {
        return Err(Error::Empty("campaign dataset".into()));
    }
    let count = required_faults((WORD_LENGTH * neurons) as u64)? as usize;
    let specs = sample_faults(layer, neurons, count, data.len(), seed)?;
    let traces = golden_traces(model, &data.inputs)?;
    let faults = specs
        .par_iter()
        .map_init(
            || Executor::new(model),
            |exec, &spec| {
                let trace = &traces[spec.input_index];
                let delta = bitflip_delta(trace.neuron_value(model, spec.target), spec.bit);
                let category = categorize_fault(&delta, &ranges[spec.target.neuron]);
                let logits = exec.resume_unchecked(trace, spec.target, Injection::Override(delta.faulty));
                let predicted = predicted_class(logits);
                let label = data.labels[spec.input_index];
                FaultRecord {
                    spec,
                    delta,
                    category,
                    outcome: if predicted == Some(trace.golden_top()) {
                        Outcome::Masked
                    } else {
                        Outcome::Misclassified
                    },
                    golden_correct: trace.golden_top() == label,
                    faulty_correct: predicted == Some(label),
                }
            },
        )
        .collect();
    Ok(CampaignResult { layer, seed, faults })
}
