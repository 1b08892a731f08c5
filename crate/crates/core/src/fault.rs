//! Single-bitflip fault model over IEEE-754 single-precision neuron outputs.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NeuronRef;

/// Bits per activation value.
pub const WORD_LENGTH: usize = 32;

/// Upper limit of [`required_faults`] as the population grows without bound.
pub const MAX_REQUIRED_FAULTS: u64 = 9604;

/// Bit position inside an f32: 31 is the sign, 30..=23 the exponent (30 most
/// significant), 22..=0 the mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitIndex(u8);

impl BitIndex {
    pub const SIGN: BitIndex = BitIndex(31);

    pub fn new(position: u8) -> Result<Self> {
        if (position as usize) < WORD_LENGTH {
            Ok(Self(position))
        } else {
            Err(Error::Config(format!("bit position {position} outside 0..=31")))
        }
    }

    pub fn position(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = BitIndex> {
        (0..WORD_LENGTH as u8).map(BitIndex)
    }

    pub fn is_exponent(self) -> bool {
        (23..=30).contains(&self.0)
    }
}

impl fmt::Display for BitIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Toggles one bit of the IEEE-754 encoding.
#[inline]
pub fn bitflip(value: f32, bit: BitIndex) -> f32 {
    f32::from_bits(value.to_bits() ^ (1u32 << bit.0))
}

/// Difference a fault makes at a neuron output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delta {
    Finite(f32),
    PlusInf,
    MinusInf,
    Nan,
}

impl Delta {
    pub fn from_values(golden: f32, faulty: f32) -> Self {
        if faulty.is_nan() || golden.is_nan() {
            return Delta::Nan;
        }
        let d = faulty - golden;
        if d.is_nan() {
            Delta::Nan
        } else if d == f32::INFINITY {
            Delta::PlusInf
        } else if d == f32::NEG_INFINITY {
            Delta::MinusInf
        } else {
            Delta::Finite(d)
        }
    }

    /// Numeric view; markers map to ±inf and NaN.
    pub fn as_f32(self) -> f32 {
        match self {
            Delta::Finite(d) => d,
            Delta::PlusInf => f32::INFINITY,
            Delta::MinusInf => f32::NEG_INFINITY,
            Delta::Nan => f32::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BitflipDelta {
    pub golden: f32,
    pub faulty: f32,
    pub delta: Delta,
}

pub fn bitflip_delta(value: f32, bit: BitIndex) -> BitflipDelta {
    let faulty = bitflip(value, bit);
    BitflipDelta {
        golden: value,
        faulty,
        delta: Delta::from_values(value, faulty),
    }
}

/// Number of random faults needed for a 95% confidence level and 1% error
/// margin over a population of `population` bits:
/// `N / (1 + e^2 (N - 1) / (z^2 p (1 - p)))` with `e = 0.01`, `z = 1.96`,
/// `p = 0.5`, rounded up.
///
/// `e^2 / (z^2 p (1 - p))` is exactly `1 / 9604`, so the count reduces to
/// `9604 N / (9603 + N)` and is evaluated in integer arithmetic.
pub fn required_faults(population: u64) -> Result<u64> {
    if population == 0 {
        return Err(Error::Config("fault population must be positive".into()));
    }
    let n = population as u128;
    let num = MAX_REQUIRED_FAULTS as u128 * n;
    let den = MAX_REQUIRED_FAULTS as u128 - 1 + n;
    Ok(num.div_ceil(den) as u64)
}

/// One sampled fault: a bitflip at one neuron while one input is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: NeuronRef,
    pub bit: BitIndex,
    pub input_index: usize,
}

/// Per-fault generator derived from `(seed, layer, ordinal)` alone, so the
/// draw does not depend on evaluation order.
fn fault_rng(seed: u64, layer: usize, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64);
    // A fault draws three values; 64 words leaves room for rejection resampling.
    rng.set_word_pos(ordinal as u128 * 64);
    rng
}

/// Draws `count` faults uniformly over (neuron in layer) x (bit) x (input).
pub fn sample_faults(
    layer: usize,
    neurons: usize,
    count: usize,
    dataset_size: usize,
    seed: u64,
) -> Result<Vec<FaultSpec>> {
    if neurons == 0 {
        return Err(Error::Empty(format!("layer {layer} has no neurons")));
    }
    if dataset_size == 0 {
        return Err(Error::Empty("fault sampling over an empty dataset".into()));
    }
    if count == 0 {
        return Err(Error::Config("fault count must be at least 1".into()));
    }
    Ok((0..count as u64)
        .map(|ordinal| {
            let mut rng = fault_rng(seed, layer, ordinal);
            FaultSpec {
                target: NeuronRef::new(layer, rng.random_range(0..neurons)),
                bit: BitIndex(rng.random_range(0..WORD_LENGTH as u8)),
                input_index: rng.random_range(0..dataset_size),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bit(p: u8) -> BitIndex {
        BitIndex::new(p).unwrap()
    }

    #[test]
    fn known_flips() {
        assert_eq!(bitflip(1.0, bit(31)), -1.0);
        assert_eq!(bitflip(1.0, bit(30)), f32::INFINITY);
        assert_eq!(bitflip(2.0, bit(23)), 4.0);
        assert!(BitIndex::new(32).is_err());
    }

    #[test]
    fn deltas_and_markers() {
        assert_eq!(bitflip_delta(2.0, bit(23)).delta, Delta::Finite(2.0));
        assert_eq!(bitflip_delta(1.0, bit(31)).delta, Delta::Finite(-2.0));
        let nan = bitflip_delta(1.5, bit(30));
        assert_eq!(1.5f32.to_bits(), 0x3FC0_0000);
        assert!(nan.faulty.is_nan());
        assert_eq!(nan.delta, Delta::Nan);
        assert_eq!(bitflip_delta(1.0, bit(30)).delta, Delta::PlusInf);
        assert_eq!(bitflip_delta(-1.0, bit(30)).delta, Delta::MinusInf);
        let neg_zero = bitflip_delta(0.0, BitIndex::SIGN);
        assert!(neg_zero.faulty == 0.0 && neg_zero.faulty.is_sign_negative());
        assert_eq!(neg_zero.delta, Delta::Finite(0.0));
    }

    #[test]
    fn required_fault_counts() {
        assert_eq!(required_faults(1).unwrap(), 1);
        assert_eq!(required_faults(3200).unwrap(), 2401);
        assert_eq!(required_faults(u64::MAX / 2).unwrap(), MAX_REQUIRED_FAULTS);
        assert!(required_faults(0).is_err());
    }

    #[test]
    fn required_faults_matches_floating_formula() {
        // Direct evaluation of the confidence formula in f64.
        for n in [2u64, 10, 320, 1024, 2048, 3200, 73_728, 1_000_000] {
            let nf = n as f64;
            let direct = nf / (1.0 + 0.01f64.powi(2) * (nf - 1.0) / (1.96f64.powi(2) * 0.25));
            assert_eq!(required_faults(n).unwrap(), direct.ceil() as u64, "n = {n}");
        }
    }

    #[test]
    fn sampler_is_deterministic_and_in_range() {
        let count = required_faults(32 * 100).unwrap() as usize;
        let a = sample_faults(2, 100, count, 50, 9).unwrap();
        assert_eq!(a.len(), 2401);
        assert_eq!(a, sample_faults(2, 100, count, 50, 9).unwrap());
        assert_ne!(a, sample_faults(2, 100, count, 50, 10).unwrap());
        assert!(a
            .iter()
            .all(|f| f.bit.position() < 32 && f.target.neuron < 100 && f.input_index < 50));
        assert!(a.iter().all(|f| f.target.layer == 2));
        // A prefix of a longer draw is the shorter draw.
        assert_eq!(sample_faults(2, 100, 10, 50, 9).unwrap(), a[..10]);
    }

    #[test]
    fn sampler_rejects_degenerate_inputs() {
        assert!(sample_faults(0, 0, 5, 5, 1).is_err());
        assert!(sample_faults(0, 5, 5, 0, 1).is_err());
        assert!(sample_faults(0, 5, 0, 5, 1).is_err());
    }

    #[test]
    fn bit_positions_pass_chi_square() {
        // Critical value of chi-square with 31 degrees of freedom at
        // significance 0.001 (scipy.stats.chi2.ppf(0.999, 31)).
        const CRITICAL: f64 = 61.098;
        let faults = sample_faults(0, 7, 100_000, 13, 2024).unwrap();
        let mut counts = [0u64; 32];
        for f in &faults {
            counts[f.bit.position() as usize] += 1;
        }
        let expected = faults.len() as f64 / 32.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < CRITICAL, "chi2 = {chi2}");
    }

    proptest! {
        #[test]
        fn bitflip_is_an_involution(pattern in any::<u32>(), position in 0u8..32) {
            let v = f32::from_bits(pattern);
            let b = bit(position);
            prop_assert_eq!(bitflip(bitflip(v, b), b).to_bits(), pattern);
            prop_assert_eq!((bitflip(v, b).to_bits() ^ pattern).count_ones(), 1);
        }

        #[test]
        fn required_faults_monotone_and_bounded(n in 1u64..5_000_000) {
            let r = required_faults(n).unwrap();
            prop_assert!(r <= n.min(MAX_REQUIRED_FAULTS));
            prop_assert!(r <= required_faults(n + 1).unwrap());
        }
    }
}
