//! Bracketing search for the smallest perturbation that changes the golden
//! top class along one sign.

use serde::{Deserialize, Serialize};

use super::config::{AnalysisConfig, MAX_SEARCH_EVALS};
use crate::nn::{changes_top, Executor, Injection, NeuronRef, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Positive, Sign::Negative];

    pub fn apply(self, magnitude: f32) -> f32 {
        match self {
            Sign::Positive => magnitude,
            Sign::Negative => -magnitude,
        }
    }
}

/// Search bracket on magnitudes, `(lo, hi]`. `lo_safe` / `hi_misclassifies`
/// record endpoint outcomes already known from screening; unknown endpoints
/// are evaluated first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchInterval {
    pub lo: f32,
    pub hi: f32,
    pub lo_safe: bool,
    pub hi_misclassifies: bool,
}

impl SearchInterval {
    /// The probe already misclassified: the threshold lies in `(0, eps]`.
    pub fn below_probe(eps: f32) -> Self {
        Self {
            lo: 0.0,
            hi: eps,
            lo_safe: true,
            hi_misclassifies: true,
        }
    }

    /// The probe did not misclassify: search `(eps, bound]`.
    pub fn above_probe(eps: f32, bound: f32) -> Self {
        Self {
            lo: eps,
            hi: bound,
            lo_safe: true,
            hi_misclassifies: false,
        }
    }

    /// Nothing known: the whole half-line `(0, bound]`.
    pub fn full(bound: f32) -> Self {
        Self {
            lo: 0.0,
            hi: bound,
            lo_safe: true,
            hi_misclassifies: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// Largest magnitude observed not to misclassify, below the first
    /// misclassifying one (signed).
    Found(f32),
    /// No misclassification anywhere up to the search bound.
    NotFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub threshold: Threshold,
    /// Injected forward executions spent.
    pub evaluations: u32,
    /// An endpoint assumed safe turned out to misclassify.
    pub anomaly: bool,
}

/// Next probe point inside `(lo, hi)`: geometric midpoint across wide
/// positive brackets, a point scaled to the absolute floor when the bracket
/// starts at zero, arithmetic midpoint otherwise.
fn split(lo: f64, hi: f64, floor: f64) -> f64 {
    if lo > 0.0 && hi / lo > 4.0 {
        (lo * hi).sqrt()
    } else if lo == 0.0 && hi > 4.0 * floor {
        (floor * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

pub(crate) fn search_with(
    exec: &mut Executor,
    trace: &Trace,
    neuron: NeuronRef,
    sign: Sign,
    interval: SearchInterval,
    cfg: &AnalysisConfig,
) -> SearchOutcome {
    let top = trace.golden_top();
    let mut evaluations = 0u32;
    let mut misclassifies = |magnitude: f64, evaluations: &mut u32| -> bool {
        *evaluations += 1;
        let delta = sign.apply(magnitude as f32);
        changes_top(exec.resume_unchecked(trace, neuron, Injection::Delta(delta)), top)
    };

    let (mut lo, mut hi) = (interval.lo as f64, interval.hi as f64);
    let mut anomaly = false;
    if !interval.hi_misclassifies && !misclassifies(hi, &mut evaluations) {
        return SearchOutcome {
            threshold: Threshold::NotFound,
            evaluations,
            anomaly,
        };
    }
    if !interval.lo_safe && lo > 0.0 && misclassifies(lo, &mut evaluations) {
        anomaly = true;
        hi = lo;
        lo = 0.0;
    }

    let tol = cfg.tolerance as f64;
    // Floor for brackets starting at zero: the absolute tolerance itself.
    let floor = tol;
    while evaluations < MAX_SEARCH_EVALS {
        let mid = split(lo, hi, floor);
        if hi - lo <= tol * mid.abs().max(1.0) || mid as f32 <= lo as f32 || mid as f32 >= hi as f32 {
            break;
        }
        if misclassifies(mid, &mut evaluations) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SearchOutcome {
        threshold: Threshold::Found(sign.apply(lo as f32)),
        evaluations,
        anomaly,
    }
}

/// Searches one input and sign for the misclassification threshold.
pub fn search_threshold(
    exec: &mut Executor,
    trace: &Trace,
    neuron: NeuronRef,
    sign: Sign,
    interval: SearchInterval,
    cfg: &AnalysisConfig,
) -> crate::Result<SearchOutcome> {
    exec.model().check_neuron(neuron)?;
    if !(interval.lo >= 0.0 && interval.lo < interval.hi && interval.hi.is_finite()) {
        return Err(crate::Error::Config(format!(
            "search interval ({}, {}] is not a positive bracket",
            interval.lo, interval.hi
        )));
    }
    Ok(search_with(exec, trace, neuron, sign, interval, cfg))
}
