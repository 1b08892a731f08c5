//! Per-neuron vulnerability value ranges for feed-forward classifiers under
//! single-bitflip faults, and the fault-injection machinery used to check them.

pub mod error;
pub mod fault;
pub mod model_io;
pub mod nn;
pub mod tensor;
pub mod validation;
pub mod vigor;

pub use error::{Error, Result};
