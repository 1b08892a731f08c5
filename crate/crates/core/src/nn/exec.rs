//! Forward execution with single-neuron injection, and the reverse-mode
//! gradient of the misclassification loss with respect to that neuron.

use super::loss::{golden_top_class, margin_sum, sigmoid64_derivative};
use super::model::{NetworkModel, NeuronRef};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Injection {
    /// Add to the golden value.
    Delta(f32),
    /// Replace the golden value.
    Override(f32),
}

impl Injection {
    #[inline]
    pub fn apply(self, golden: f32) -> f32 {
        match self {
            Injection::Delta(d) => golden + d,
            Injection::Override(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionHook {
    pub target: NeuronRef,
    pub injection: Injection,
}

impl InjectionHook {
    pub fn delta(target: NeuronRef, delta: f32) -> Self {
        Self {
            target,
            injection: Injection::Delta(delta),
        }
    }

    pub fn overriding(target: NeuronRef, value: f32) -> Self {
        Self {
            target,
            injection: Injection::Override(value),
        }
    }
}

/// Golden (uninjected) activations of every layer for one input.
#[derive(Debug, Clone)]
pub struct Trace {
    outputs: Vec<Vec<f32>>,
    golden_top: usize,
}

impl Trace {
    pub fn layer_output(&self, layer: usize) -> &[f32] {
        &self.outputs[layer]
    }

    pub fn logits(&self) -> &[f32] {
        self.outputs.last().unwrap()
    }

    pub fn golden_top(&self) -> usize {
        self.golden_top
    }

    /// Golden value of a neuron (the surface must exist in `model`).
    pub fn neuron_value(&self, model: &NetworkModel, neuron: NeuronRef) -> f32 {
        self.outputs[model.surfaces()[neuron.layer].layer][neuron.neuron]
    }
}

/// Gradient of the loss with respect to an injected neuron for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronGradient {
    /// d(loss)/d(neuron). Kept in f64: the logistic derivative underflows
    /// f32 once the margin sum passes ~87.
    pub loss: f64,
    /// d(sum of top-class margins)/d(neuron). The loss gradient is this
    /// value times the (strictly positive) logistic derivative.
    pub margin: f32,
    /// False when a non-finite activation lies on the downstream path.
    pub defined: bool,
}

impl NeuronGradient {
    /// Exactly-zero propagation: every downstream path is dead.
    pub fn is_zero(&self) -> bool {
        self.defined && self.margin == 0.0
    }
}

/// Reusable per-worker scratch space for one model.
pub struct Executor<'m> {
    model: &'m NetworkModel,
    acts: Vec<Vec<f32>>,
    grads: Vec<Vec<f32>>,
    forwards: u64,
}

impl<'m> Executor<'m> {
    pub fn new(model: &'m NetworkModel) -> Self {
        let sizes: Vec<usize> = (0..model.layers().len()).map(|i| model.layer_output_len(i)).collect();
        Self {
            model,
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            grads: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            forwards: 0,
        }
    }

    pub fn model(&self) -> &'m NetworkModel {
        self.model
    }

    /// Number of (full or resumed) forward executions run so far.
    pub fn forwards(&self) -> u64 {
        self.forwards
    }

    /// Golden forward pass retaining every layer output.
    pub fn trace(&mut self, input: &[f32]) -> Result<Trace> {
        if input.len() != self.model.input_len() {
            return Err(Error::Shape(format!(
                "input has {} values, model expects {:?}",
                input.len(),
                self.model.input_shape()
            )));
        }
        self.run_from(None, input);
        let golden_top = golden_top_class(self.acts.last().unwrap())?;
        Ok(Trace {
            outputs: self.acts.clone(),
            golden_top,
        })
    }

    /// Runs layers after `start` (or all layers, from `input`, when `start` is None).
    fn run_from(&mut self, start: Option<usize>, input: &[f32]) {
        let layers = self.model.layers();
        let first = start.map_or(0, |s| s + 1);
        for j in first..layers.len() {
            let (before, after) = self.acts.split_at_mut(j);
            let src: &[f32] = if j == 0 { input } else { &before[j - 1] };
            layers[j].forward(self.model.layer_input_shape(j), src, &mut after[0]);
        }
        self.forwards += 1;
    }

    /// Replays `trace` from the target neuron's surface with the injection
    /// applied, returning the resulting logits.
    pub fn resume(&mut self, trace: &Trace, target: NeuronRef, injection: Injection) -> Result<&[f32]> {
        self.model.check_neuron(target)?;
        Ok(self.resume_unchecked(trace, target, injection))
    }

    pub(crate) fn resume_unchecked(&mut self, trace: &Trace, target: NeuronRef, injection: Injection) -> &[f32] {
        let at = self.model.surfaces()[target.layer].layer;
        self.acts[at].copy_from_slice(&trace.outputs[at]);
        let slot = &mut self.acts[at][target.neuron];
        *slot = injection.apply(*slot);
        self.run_from(Some(at), &[]);
        self.acts.last().unwrap()
    }

    /// Injected forward followed by the backward pass to the target neuron.
    pub fn resume_with_gradient(
        &mut self,
        trace: &Trace,
        target: NeuronRef,
        injection: Injection,
    ) -> Result<(Vec<f32>, NeuronGradient)> {
        self.model.check_neuron(target)?;
        Ok(self.resume_with_gradient_unchecked(trace, target, injection))
    }

    pub(crate) fn resume_with_gradient_unchecked(
        &mut self,
        trace: &Trace,
        target: NeuronRef,
        injection: Injection,
    ) -> (Vec<f32>, NeuronGradient) {
        let logits = self.resume_unchecked(trace, target, injection).to_vec();
        let model = self.model;
        let layers = model.layers();
        let at = model.surfaces()[target.layer].layer;
        let top = trace.golden_top;
        let n = logits.len();

        let last = layers.len() - 1;
        for (j, g) in self.grads[last].iter_mut().enumerate() {
            *g = if j == top { (n - 1) as f32 } else { -1.0 };
        }
        for j in (at + 1..=last).rev() {
            let (before, after) = self.grads.split_at_mut(j);
            layers[j].backward_input(
                model.layer_input_shape(j),
                &self.acts[j - 1],
                &self.acts[j],
                &after[0],
                &mut before[j - 1],
            );
        }
        let margin = self.grads[at][target.neuron];
        let finite_path = self.acts[at..].iter().all(|a| a.iter().all(|v| v.is_finite()));
        let defined = finite_path && margin.is_finite();
        let loss = if defined {
            sigmoid64_derivative(margin_sum(&logits, top)) * margin as f64
        } else {
            f64::NAN
        };
        (logits, NeuronGradient { loss, margin, defined })
    }
}

/// Logits for a batch, optionally with one injected neuron.
#[derive(Debug, Clone)]
pub struct ForwardResult {
    /// `[batch, classes]`.
    pub logits: Tensor,
    /// Top class of the uninjected pass for each input.
    pub golden_top: Vec<usize>,
}

fn check_batch(model: &NetworkModel, batch: &Tensor) -> Result<()> {
    if batch.shape().len() < 2 || batch.item_shape() != model.input_shape() {
        return Err(Error::Shape(format!(
            "batch shape {:?} does not match model input {:?} with a leading batch dimension",
            batch.shape(),
            model.input_shape()
        )));
    }
    Ok(())
}

pub fn forward(model: &NetworkModel, batch: &Tensor, hook: Option<&InjectionHook>) -> Result<ForwardResult> {
    check_batch(model, batch)?;
    if let Some(h) = hook {
        model.check_neuron(h.target)?;
    }
    let mut exec = Executor::new(model);
    let mut logits = Vec::with_capacity(batch.batch_len() * model.num_classes());
    let mut golden_top = Vec::with_capacity(batch.batch_len());
    for i in 0..batch.batch_len() {
        let trace = exec.trace(batch.item(i))?;
        golden_top.push(trace.golden_top());
        match hook {
            Some(h) => logits.extend_from_slice(exec.resume_unchecked(&trace, h.target, h.injection)),
            None => logits.extend_from_slice(trace.logits()),
        }
    }
    Ok(ForwardResult {
        logits: Tensor::new(vec![batch.batch_len(), model.num_classes()], logits)?,
        golden_top,
    })
}

/// Per-input gradient of the misclassification loss with respect to the
/// hooked neuron's (post-injection) output.
pub fn grad_wrt_neuron(model: &NetworkModel, batch: &Tensor, hook: &InjectionHook) -> Result<Vec<NeuronGradient>> {
    check_batch(model, batch)?;
    model.check_neuron(hook.target)?;
    let mut exec = Executor::new(model);
    (0..batch.batch_len())
        .map(|i| {
            let trace = exec.trace(batch.item(i))?;
            Ok(exec
                .resume_with_gradient_unchecked(&trace, hook.target, hook.injection)
                .1)
        })
        .collect()
}

/// Golden traces for every item of `batch`, computed in parallel.
pub fn golden_traces(model: &NetworkModel, batch: &Tensor) -> Result<Vec<Trace>> {
    use rayon::prelude::*;
    check_batch(model, batch)?;
    (0..batch.batch_len())
        .into_par_iter()
        .map_init(|| Executor::new(model), |exec, i| exec.trace(batch.item(i)))
        .collect()
}
