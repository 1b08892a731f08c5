//! Per-input non-vulnerable bounds, their intersection over an input set,
//! and classification of perturbations against the result.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fault::Delta;
use crate::nn::{changes_top, NeuronRef};

/// Largest safe perturbation on each side for one input. Infinite bounds
/// mean no misclassification was found on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBounds {
    pub r_lower: f32,
    pub r_upper: f32,
}

impl InputBounds {
    pub const UNBOUNDED: InputBounds = InputBounds {
        r_lower: f32::NEG_INFINITY,
        r_upper: f32::INFINITY,
    };
}

/// What one side (negative or positive perturbations) of a neuron looks like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SideCase {
    /// Nothing on this side misclassifies any input.
    NoVulnerable,
    /// Past the non-vulnerable bound every input misclassifies.
    VulnerableOnly,
    /// A semi-vulnerable band, then a vulnerable range.
    SemiThenVulnerable,
    /// Past the non-vulnerable bound only some inputs ever misclassify.
    SemiOnly,
}

impl SideCase {
    pub fn name(self) -> &'static str {
        match self {
            SideCase::NoVulnerable => "none",
            SideCase::VulnerableOnly => "vulnerable",
            SideCase::SemiThenVulnerable => "semi+vulnerable",
            SideCase::SemiOnly => "semi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RangeCase {
    pub neg_side: SideCase,
    pub pos_side: SideCase,
}

impl fmt::Display for RangeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.neg_side.name(), self.pos_side.name())
    }
}

impl FromStr for RangeCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let side = |t: &str| match t {
            "none" => Ok(SideCase::NoVulnerable),
            "vulnerable" => Ok(SideCase::VulnerableOnly),
            "semi+vulnerable" => Ok(SideCase::SemiThenVulnerable),
            "semi" => Ok(SideCase::SemiOnly),
            _ => Err(Error::format("case", format!("unknown side `{t}`"))),
        };
        let (neg, pos) = s
            .split_once('/')
            .ok_or_else(|| Error::format("case", format!("expected `neg/pos`, got `{s}`")))?;
        Ok(RangeCase {
            neg_side: side(neg)?,
            pos_side: side(pos)?,
        })
    }
}

/// Category of a perturbation relative to a neuron's ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    NonCritical,
    SemiCritical,
    Critical,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::NonCritical => "non_critical",
            Category::SemiCritical => "semi_critical",
            Category::Critical => "critical",
        }
    }
}

/// Vulnerability ranges of one neuron over an input set.
///
/// Perturbations in `[r_lower, r_upper]` never changed the golden class;
/// those below `vv_lower` or above `vv_upper` changed it for every input;
/// the bands in between changed it for some inputs only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronVulnerability {
    pub neuron: NeuronRef,
    pub r_lower: f32,
    pub r_upper: f32,
    pub vv_lower: f32,
    pub vv_upper: f32,
    pub case: RangeCase,
}

impl NeuronVulnerability {
    /// The verdict for a neuron that never misclassifies.
    pub fn unbounded(neuron: NeuronRef) -> Self {
        let mut nv = NeuronVulnerability {
            neuron,
            r_lower: f32::NEG_INFINITY,
            r_upper: f32::INFINITY,
            vv_lower: f32::NEG_INFINITY,
            vv_upper: f32::INFINITY,
            case: RangeCase {
                neg_side: SideCase::NoVulnerable,
                pos_side: SideCase::NoVulnerable,
            },
        };
        nv.case = classify_range_case(&nv);
        nv
    }

    /// Classifies a perturbation. Bounds themselves are non-critical; NaN is
    /// always critical; an infinite delta is critical when its side has a
    /// vulnerable range, non-critical when its side has no finite bound.
    pub fn categorize(&self, delta: Delta) -> Category {
        match delta {
            Delta::Nan => Category::Critical,
            Delta::PlusInf => side_for_infinity(self.r_upper, self.vv_upper),
            Delta::MinusInf => side_for_infinity(self.r_lower, self.vv_lower),
            Delta::Finite(d) => {
                if d >= self.r_lower && d <= self.r_upper {
                    Category::NonCritical
                } else if d < self.vv_lower || d > self.vv_upper {
                    Category::Critical
                } else {
                    Category::SemiCritical
                }
            }
        }
    }
}

fn side_for_infinity(r: f32, vv: f32) -> Category {
    if r.is_infinite() {
        Category::NonCritical
    } else if vv.is_finite() {
        Category::Critical
    } else {
        Category::SemiCritical
    }
}

/// Intersects per-input bounds: the non-vulnerable range is the tightest
/// bound on each side, the vulnerable range starts past the loosest one.
pub fn neuron_ranges(neuron: NeuronRef, bounds: &[InputBounds]) -> Result<NeuronVulnerability> {
    if bounds.is_empty() {
        return Err(Error::Empty(format!(
            "no analyzed inputs for layer {} neuron {}",
            neuron.layer, neuron.neuron
        )));
    }
    let mut nv = NeuronVulnerability::unbounded(neuron);
    nv.vv_lower = f32::INFINITY;
    nv.vv_upper = f32::NEG_INFINITY;
    for b in bounds {
        debug_assert!(b.r_lower <= 0.0 && b.r_upper >= 0.0, "{b:?}");
        nv.r_lower = nv.r_lower.max(b.r_lower);
        nv.r_upper = nv.r_upper.min(b.r_upper);
        nv.vv_lower = nv.vv_lower.min(b.r_lower);
        nv.vv_upper = nv.vv_upper.max(b.r_upper);
    }
    nv.case = classify_range_case(&nv);
    Ok(nv)
}

fn side_case(r: f32, vv: f32) -> SideCase {
    if r.is_infinite() {
        SideCase::NoVulnerable
    } else if vv == r {
        SideCase::VulnerableOnly
    } else if vv.is_finite() {
        SideCase::SemiThenVulnerable
    } else {
        SideCase::SemiOnly
    }
}

pub fn classify_range_case(nv: &NeuronVulnerability) -> RangeCase {
    RangeCase {
        neg_side: side_case(nv.r_lower, nv.vv_lower),
        pos_side: side_case(nv.r_upper, nv.vv_upper),
    }
}

/// Walks `delta` one ulp at a time until `logits` with `delta` added at
/// `class` keeps `top` and one more ulp outward would not.
fn settle(logits: &[f32], class: usize, top: usize, guess: f32, outward: f32) -> f32 {
    let mut scratch = logits.to_vec();
    let mut misclassifies = |d: f32| {
        scratch[class] = logits[class] + d;
        changes_top(&scratch, top)
    };
    let step = |d: f32, dir: f32| if dir > 0.0 { d.next_up() } else { d.next_down() };
    let mut d = guess;
    while misclassifies(d) && d != 0.0 {
        d = step(d, -outward);
    }
    loop {
        let next = step(d, outward);
        if !next.is_finite() || misclassifies(next) {
            return d;
        }
        d = next;
    }
}

/// Closed-form bounds for a logit neuron, exact under f32 addition and the
/// lowest-index tie rule. Raising a non-top logit misclassifies once it
/// overtakes the top; lowering the top misclassifies once the runner-up
/// overtakes it; the other two directions never misclassify.
pub fn last_layer_ranges(logits: &[f32], neuron_class: usize) -> Result<InputBounds> {
    if neuron_class >= logits.len() || logits.len() < 2 {
        return Err(Error::Addressing(format!(
            "class {neuron_class} outside {} logits",
            logits.len()
        )));
    }
    let top = crate::nn::golden_top_class(logits)?;
    if neuron_class == top {
        let runner_up = logits
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != top)
            .map(|(_, &v)| v)
            .fold(f32::NEG_INFINITY, f32::max);
        let guess = (runner_up as f64 - logits[top] as f64) as f32;
        Ok(InputBounds {
            r_lower: settle(logits, top, top, guess, -1.0),
            r_upper: f32::INFINITY,
        })
    } else {
        let guess = (logits[top] as f64 - logits[neuron_class] as f64) as f32;
        Ok(InputBounds {
            r_lower: f32::NEG_INFINITY,
            r_upper: settle(logits, neuron_class, top, guess, 1.0),
        })
    }
}
