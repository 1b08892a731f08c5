//! Per-neuron driver: screen, search each non-quiet input and sign, and
//! intersect the per-input bounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::AnalysisConfig;
use super::ranges::{last_layer_ranges, neuron_ranges, InputBounds, NeuronVulnerability};
use super::screen::{screen_traces, Probe, ScreenDecision, ScreenResult};
use super::search::{search_with, Sign, Threshold};
use crate::error::{Error, Result};
use crate::nn::{golden_traces, Executor, NetworkModel, NeuronRef, Trace};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NeuronStats {
    /// Injected forward executions, screening probes included.
    pub forwards: u64,
    /// (input, sign) pairs that needed a search.
    pub searches: u32,
    /// Searches whose bracket was narrowed to `(0, eps]` by the probe.
    pub narrowed: u32,
    pub max_search_evals: u32,
    pub anomalies: u32,
    pub closed_form: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronAnalysis {
    pub range: NeuronVulnerability,
    /// `[positive, negative]` quiet-probe fractions.
    pub zero_grad_fraction: [f64; 2],
    pub decision: ScreenDecision,
    pub stats: NeuronStats,
}

/// Per-input bounds for `neuron` given its screening result. Quiet probes
/// and skipped neurons contribute unbounded sides.
pub fn input_bounds(
    exec: &mut Executor,
    traces: &[Trace],
    screen: &ScreenResult,
    cfg: &AnalysisConfig,
    stats: &mut NeuronStats,
) -> Vec<InputBounds> {
    if screen.decision == ScreenDecision::Skip {
        return vec![InputBounds::UNBOUNDED; traces.len()];
    }
    traces
        .iter()
        .enumerate()
        .map(|(i, trace)| {
            let mut b = InputBounds::UNBOUNDED;
            for sign in Sign::BOTH {
                let Probe::Search(interval) = screen.probe(i, sign) else {
                    continue;
                };
                let out = search_with(exec, trace, screen.neuron, sign, interval, cfg);
                stats.searches += 1;
                stats.narrowed += u32::from(interval.hi_misclassifies);
                stats.max_search_evals = stats.max_search_evals.max(out.evaluations);
                stats.anomalies += u32::from(out.anomaly);
                if let Threshold::Found(t) = out.threshold {
                    match sign {
                        Sign::Positive => b.r_upper = t,
                        Sign::Negative => b.r_lower = t,
                    }
                }
            }
            b
        })
        .collect()
}

fn closed_form_bounds(traces: &[Trace], neuron: NeuronRef) -> Result<Vec<InputBounds>> {
    traces
        .iter()
        .map(|t| last_layer_ranges(t.logits(), neuron.neuron))
        .collect()
}

pub(crate) fn analyze_with(
    exec: &mut Executor,
    traces: &[Trace],
    neuron: NeuronRef,
    cfg: &AnalysisConfig,
) -> Result<NeuronAnalysis> {
    let model = exec.model();
    if cfg.closed_form_last_layer && model.is_output_surface(neuron.layer) {
        let bounds = closed_form_bounds(traces, neuron)?;
        return Ok(NeuronAnalysis {
            range: neuron_ranges(neuron, &bounds)?,
            zero_grad_fraction: [0.0; 2],
            decision: ScreenDecision::FullAnalysis,
            stats: NeuronStats {
                closed_form: true,
                ..NeuronStats::default()
            },
        });
    }
    let start = exec.forwards();
    let screen = screen_traces(exec, traces, neuron, cfg);
    let mut stats = NeuronStats::default();
    let bounds = input_bounds(exec, traces, &screen, cfg, &mut stats);
    stats.forwards = exec.forwards() - start;
    Ok(NeuronAnalysis {
        range: neuron_ranges(neuron, &bounds)?,
        zero_grad_fraction: screen.zero_grad_fraction,
        decision: screen.decision,
        stats,
    })
}

/// Ranges for every neuron of the selected surfaces, over one input set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub layers: Vec<usize>,
    pub inputs: usize,
    /// In (layer, neuron) order.
    pub neurons: Vec<NeuronAnalysis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub neurons: usize,
    pub screened_neurons: usize,
    pub closed_form_neurons: usize,
    pub skipped_neurons: usize,
    pub semi_neurons: usize,
    /// Skipped over screened neurons.
    pub skip_fraction: f64,
    /// Injected forwards per screened neuron and input.
    pub forwards_per_neuron: f64,
    pub total_forwards: u64,
    pub searches: u64,
    /// Fraction of searches whose bracket the probe narrowed.
    pub narrowed_fraction: f64,
    pub max_search_evals: u32,
    pub anomalies: u64,
}

impl AnalysisReport {
    pub fn ranges(&self) -> Vec<NeuronVulnerability> {
        self.neurons.iter().map(|n| n.range).collect()
    }

    pub fn summary(&self) -> AnalysisSummary {
        let screened: Vec<&NeuronAnalysis> = self.neurons.iter().filter(|n| !n.stats.closed_form).collect();
        let total_forwards: u64 = screened.iter().map(|n| n.stats.forwards).sum();
        let searches: u64 = screened.iter().map(|n| n.stats.searches as u64).sum();
        let narrowed: u64 = screened.iter().map(|n| n.stats.narrowed as u64).sum();
        let skipped = screened.iter().filter(|n| n.decision == ScreenDecision::Skip).count();
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        AnalysisSummary {
            neurons: self.neurons.len(),
            screened_neurons: screened.len(),
            closed_form_neurons: self.neurons.len() - screened.len(),
            skipped_neurons: skipped,
            semi_neurons: screened
                .iter()
                .filter(|n| n.decision == ScreenDecision::SemiAnalysis)
                .count(),
            skip_fraction: ratio(skipped as f64, screened.len() as f64),
            forwards_per_neuron: ratio(total_forwards as f64, (screened.len() * self.inputs) as f64),
            total_forwards,
            searches,
            narrowed_fraction: ratio(narrowed as f64, searches as f64),
            max_search_evals: screened.iter().map(|n| n.stats.max_search_evals).max().unwrap_or(0),
            anomalies: screened.iter().map(|n| n.stats.anomalies as u64).sum(),
        }
    }
}

/// Runs `f` on a pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Analyzes every neuron of `layers` (all surfaces when empty) over `inputs`.
/// Results do not depend on the number of worker threads.
pub fn analyze(
    model: &NetworkModel,
    inputs: &Tensor,
    layers: &[usize],
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport> {
    cfg.validate()?;
    if inputs.shape().len() < 2 || inputs.batch_len() == 0 {
        return Err(Error::Empty("analysis set".into()));
    }
    let layers: Vec<usize> = if layers.is_empty() {
        (0..model.surfaces().len()).collect()
    } else {
        layers.to_vec()
    };
    let mut targets = Vec::new();
    for &l in &layers {
        let surface = model.surface(l)?;
        targets.extend((0..surface.len()).map(|n| NeuronRef::new(l, n)));
    }
    let traces = golden_traces(model, inputs)?;
    let neurons = targets
        .par_iter()
        .with_min_len(1)
        .map_init(|| Executor::new(model), |exec, &n| analyze_with(exec, &traces, n, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport {
        layers,
        inputs: traces.len(),
        neurons,
    })
}
