use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::WORD_LENGTH;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Magnitude of the screening probe, applied as `+eps` and `-eps`.
    pub probe_epsilon: f32,
    /// Searches cover `[-search_bound, search_bound]`.
    pub search_bound: f32,
    /// Search stops once the bracket is narrower than
    /// `tolerance * max(1, |midpoint|)`.
    pub tolerance: f32,
    /// A neuron is skipped when more than this fraction of inputs shows a
    /// zero gradient for both probe signs.
    pub zero_grad_threshold: f64,
    pub word_length: u32,
    /// Inputs per parallel work item when computing golden traces.
    pub batch_size: usize,
    pub seed: u64,
    /// Output-layer neurons use the closed form on logits rather than search.
    pub closed_form_last_layer: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            probe_epsilon: 10_000.0,
            search_bound: 5e5,
            tolerance: 0.05,
            zero_grad_threshold: 0.98,
            word_length: WORD_LENGTH as u32,
            batch_size: 64,
            seed: 0,
            closed_form_last_layer: true,
        }
    }
}

/// Upper bound on predicate evaluations for one (input, sign) search.
pub const MAX_SEARCH_EVALS: u32 = 22;

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.zero_grad_threshold > 0.5 && self.zero_grad_threshold < 1.0) {
            return fail(format!(
                "zero_grad_threshold {} not in (0.5, 1)",
                self.zero_grad_threshold
            ));
        }
        if !(self.probe_epsilon > 0.0 && self.probe_epsilon.is_finite()) {
            return fail(format!("probe_epsilon {} must be positive", self.probe_epsilon));
        }
        if !(self.search_bound.is_finite() && self.probe_epsilon <= self.search_bound) {
            return fail(format!(
                "probe_epsilon {} exceeds search_bound {}",
                self.probe_epsilon, self.search_bound
            ));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail(format!("tolerance {} must be positive", self.tolerance));
        }
        if self.word_length as usize != WORD_LENGTH {
            return fail(format!(
                "only {WORD_LENGTH}-bit words are supported, got {}",
                self.word_length
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        Ok(())
    }
}
