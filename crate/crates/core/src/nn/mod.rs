//! Minimal feed-forward inference engine with single-neuron injection hooks.

mod exec;
mod layer;
mod loss;
mod model;

pub use exec::{
    forward, golden_traces, grad_wrt_neuron, Executor, ForwardResult, Injection, InjectionHook, NeuronGradient, Trace,
};
pub use layer::{BatchNorm, Conv2d, Dense, LayerKind, LayerSpec, MaxPool2d};
pub use loss::{changes_top, golden_top_class, margin_sum, misclassification_loss, predicted_class};
pub use model::{NetworkModel, NeuronRef, Surface, TrainingMetadata};
