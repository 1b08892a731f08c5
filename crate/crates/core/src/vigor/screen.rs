//! Gradient screening: one probe of `+eps` and one of `-eps` per input,
//! each followed by a backward pass to the probed neuron.

use serde::{Deserialize, Serialize};

use super::config::AnalysisConfig;
use super::search::{SearchInterval, Sign};
use crate::error::{Error, Result};
use crate::nn::{changes_top, golden_traces, Executor, Injection, NetworkModel, NeuronRef, Trace};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScreenDecision {
    Skip,
    FullAnalysis,
    SemiAnalysis,
}

impl ScreenDecision {
    pub fn name(self) -> &'static str {
        match self {
            ScreenDecision::Skip => "skip",
            ScreenDecision::FullAnalysis => "full",
            ScreenDecision::SemiAnalysis => "semi",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "skip" => Some(ScreenDecision::Skip),
            "full" => Some(ScreenDecision::FullAnalysis),
            "semi" => Some(ScreenDecision::SemiAnalysis),
            _ => None,
        }
    }
}

/// Screening outcome for one input and one probe sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Probe {
    /// Exactly zero gradient and the probe kept the golden class: the input
    /// is insensitive to this neuron on this side.
    Quiet,
    /// Threshold to be searched inside this interval.
    Search(SearchInterval),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub neuron: NeuronRef,
    /// Fraction of inputs with a quiet probe, `[positive, negative]`.
    pub zero_grad_fraction: [f64; 2],
    pub decision: ScreenDecision,
    /// Per input, `[positive, negative]`.
    pub probes: Vec<[Probe; 2]>,
}

fn sign_slot(sign: Sign) -> usize {
    match sign {
        Sign::Positive => 0,
        Sign::Negative => 1,
    }
}

impl ScreenResult {
    pub fn probe(&self, input: usize, sign: Sign) -> Probe {
        self.probes[input][sign_slot(sign)]
    }

    pub fn zero_grad_fraction(&self, sign: Sign) -> f64 {
        self.zero_grad_fraction[sign_slot(sign)]
    }
}

pub fn decide(fractions: [f64; 2], threshold: f64) -> ScreenDecision {
    if fractions.iter().all(|&f| f > threshold) {
        ScreenDecision::Skip
    } else if fractions.iter().any(|&f| f > 1.0 - threshold && f <= threshold) {
        ScreenDecision::SemiAnalysis
    } else {
        ScreenDecision::FullAnalysis
    }
}

/// The zero test is on the derivative of the logit margin sum, which is
/// the loss gradient without the sigmoid factor; that factor underflows to
/// zero in f32 for large margins and would hide live paths. Undefined
/// gradients count as non-zero.
pub(crate) fn screen_traces(
    exec: &mut Executor,
    traces: &[Trace],
    neuron: NeuronRef,
    cfg: &AnalysisConfig,
) -> ScreenResult {
    let eps = cfg.probe_epsilon;
    let mut quiet = [0usize; 2];
    let probes = traces
        .iter()
        .map(|trace| {
            Sign::BOTH.map(|sign| {
                let (logits, grad) =
                    exec.resume_with_gradient_unchecked(trace, neuron, Injection::Delta(sign.apply(eps)));
                let flipped = changes_top(&logits, trace.golden_top());
                if grad.is_zero() && !flipped {
                    quiet[sign_slot(sign)] += 1;
                    Probe::Quiet
                } else if flipped {
                    Probe::Search(SearchInterval::below_probe(eps))
                } else {
                    Probe::Search(SearchInterval::above_probe(eps, cfg.search_bound))
                }
            })
        })
        .collect();
    let n = traces.len() as f64;
    let zero_grad_fraction = quiet.map(|q| q as f64 / n);
    ScreenResult {
        neuron,
        zero_grad_fraction,
        decision: decide(zero_grad_fraction, cfg.zero_grad_threshold),
        probes,
    }
}

pub fn gradient_screen(
    model: &NetworkModel,
    batch: &Tensor,
    neuron: NeuronRef,
    cfg: &AnalysisConfig,
) -> Result<ScreenResult> {
    cfg.validate()?;
    model.check_neuron(neuron)?;
    if batch.shape().first() == Some(&0) || batch.is_empty() {
        return Err(Error::Empty("screening batch".into()));
    }
    let traces = golden_traces(model, batch)?;
    Ok(screen_traces(&mut Executor::new(model), &traces, neuron, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_bands() {
        assert_eq!(decide([1.0, 1.0], 0.98), ScreenDecision::Skip);
        assert_eq!(decide([0.99, 0.985], 0.98), ScreenDecision::Skip);
        assert_eq!(decide([0.5, 0.0], 0.98), ScreenDecision::SemiAnalysis);
        assert_eq!(decide([1.0, 0.5], 0.98), ScreenDecision::SemiAnalysis);
        assert_eq!(decide([0.98, 0.0], 0.98), ScreenDecision::SemiAnalysis);
        assert_eq!(decide([0.0, 0.01], 0.98), ScreenDecision::FullAnalysis);
        assert_eq!(decide([1.0, 0.0], 0.98), ScreenDecision::FullAnalysis);
    }
}
