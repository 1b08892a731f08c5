//! Classification helpers and the misclassification loss used for
//! gradient screening.

use crate::error::{Error, Result};

/// Index of the largest logit; ties go to the lowest index.
pub fn golden_top_class(logits: &[f32]) -> Result<usize> {
    if logits.is_empty() {
        return Err(Error::Shape("empty logit vector".into()));
    }
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Predicted class, or `None` when any logit is NaN (the output is corrupt
/// and cannot name a class).
pub fn predicted_class(logits: &[f32]) -> Option<usize> {
    if logits.is_empty() || logits.iter().any(|v| v.is_nan()) {
        return None;
    }
    golden_top_class(logits).ok()
}

/// True when `logits` no longer select `golden_top`.
#[inline]
pub fn changes_top(logits: &[f32], golden_top: usize) -> bool {
    predicted_class(logits) != Some(golden_top)
}

/// Sum over all classes of `logit[top] - logit[i]`, accumulated in f64.
pub fn margin_sum(logits: &[f32], golden_top: usize) -> f64 {
    let top = logits[golden_top] as f64;
    logits.iter().map(|&v| top - v as f64).sum()
}

/// `sigmoid(sum_i (E_top - E_i))`; NaN logits give a NaN loss.
pub fn misclassification_loss(logits: &[f32], golden_top: usize) -> f64 {
    sigmoid64(margin_sum(logits, golden_top))
}

pub(crate) fn sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, without the `1 - s` cancellation.
pub(crate) fn sigmoid64_derivative(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}
