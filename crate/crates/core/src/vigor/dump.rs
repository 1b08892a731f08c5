//! CSV dumps of ranges and vulnerability factors. Non-finite values are
//! spelled `inf`, `-inf` and `nan`.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::analysis::NeuronAnalysis;
use super::bitmap::VulnerabilityFactors;
use super::ranges::{classify_range_case, NeuronVulnerability, RangeCase};
use super::screen::ScreenDecision;
use crate::error::{Error, Result};
use crate::nn::NeuronRef;

/// Shortest representation that parses back to the same value.
pub fn format_f32(v: f32) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        v.to_string()
    }
}

pub fn parse_f32(s: &str) -> Option<f32> {
    match s {
        "inf" => Some(f32::INFINITY),
        "-inf" => Some(f32::NEG_INFINITY),
        "nan" => Some(f32::NAN),
        _ => s.parse().ok().filter(|v: &f32| v.is_finite()),
    }
}

const RANGE_HEADER: [&str; 10] = [
    "layer",
    "neuron",
    "r_lower",
    "r_upper",
    "vv_lower",
    "vv_upper",
    "case",
    "zero_grad_fraction_pos",
    "zero_grad_fraction_neg",
    "decision",
];

/// One row of a range dump.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeRecord {
    pub range: NeuronVulnerability,
    pub zero_grad_fraction: [f64; 2],
    pub decision: ScreenDecision,
}

impl From<&NeuronAnalysis> for RangeRecord {
    fn from(a: &NeuronAnalysis) -> Self {
        RangeRecord {
            range: a.range,
            zero_grad_fraction: a.zero_grad_fraction,
            decision: a.decision,
        }
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

pub fn write_ranges(path: impl AsRef<Path>, records: &[RangeRecord]) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(RANGE_HEADER)?;
    for r in records {
        let nv = &r.range;
        w.write_record([
            nv.neuron.layer.to_string(),
            nv.neuron.neuron.to_string(),
            format_f32(nv.r_lower),
            format_f32(nv.r_upper),
            format_f32(nv.vv_lower),
            format_f32(nv.vv_upper),
            nv.case.to_string(),
            r.zero_grad_fraction[0].to_string(),
            r.zero_grad_fraction[1].to_string(),
            r.decision.name().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

pub fn read_ranges(path: impl AsRef<Path>) -> Result<Vec<RangeRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(RANGE_HEADER) {
        return Err(Error::format(
            "header",
            format!("{}: expected {}", path.display(), RANGE_HEADER.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::format(RANGE_HEADER[i], format!("row {}: `{}`", row + 1, field(i)));
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let float = |i: usize| parse_f32(field(i)).filter(|v| !v.is_nan()).ok_or_else(|| bad(i));
        let frac = |i: usize| {
            field(i)
                .parse::<f64>()
                .ok()
                .filter(|f| (0.0..=1.0).contains(f))
                .ok_or_else(|| bad(i))
        };
        let range = NeuronVulnerability {
            neuron: NeuronRef::new(int(0)?, int(1)?),
            r_lower: float(2)?,
            r_upper: float(3)?,
            vv_lower: float(4)?,
            vv_upper: float(5)?,
            case: field(6).parse::<RangeCase>()?,
        };
        if !(range.vv_lower <= range.r_lower
            && range.r_lower <= 0.0
            && 0.0 <= range.r_upper
            && range.r_upper <= range.vv_upper)
        {
            return Err(Error::format(
                "r_lower",
                format!("row {}: bounds out of order", row + 1),
            ));
        }
        if classify_range_case(&range) != range.case {
            return Err(bad(6));
        }
        out.push(RangeRecord {
            range,
            zero_grad_fraction: [frac(7)?, frac(8)?],
            decision: ScreenDecision::parse(field(9)).ok_or_else(|| bad(9))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFactorRow {
    pub layer: usize,
    pub lvf_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronFactorRow {
    pub layer: usize,
    pub neuron: usize,
    pub nvf_pct: f64,
    pub vulnerable_bits: u64,
    pub semi_bits: u64,
    pub inputs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitFactorRow {
    pub layer: usize,
    pub neuron: usize,
    pub bit: u8,
    pub bvf_pct: f64,
    pub vulnerable: u64,
    pub semi: u64,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// `layer,lvf_pct`, one row per layer.
pub fn write_layer_factors(path: impl AsRef<Path>, f: &VulnerabilityFactors) -> Result<()> {
    write_rows(
        path.as_ref(),
        f.layers.iter().map(|l| LayerFactorRow {
            layer: l.layer,
            lvf_pct: f.lvf(l),
        }),
    )
}

pub fn write_neuron_factors(path: impl AsRef<Path>, f: &VulnerabilityFactors) -> Result<()> {
    write_rows(
        path.as_ref(),
        f.neurons.iter().map(|n| NeuronFactorRow {
            layer: n.neuron.layer,
            neuron: n.neuron.neuron,
            nvf_pct: f.nvf(n),
            vulnerable_bits: n.vulnerable_bits(),
            semi_bits: n.semi_bits(),
            inputs: f.inputs,
        }),
    )
}

pub fn write_bit_factors(path: impl AsRef<Path>, f: &VulnerabilityFactors) -> Result<()> {
    write_rows(
        path.as_ref(),
        f.neurons.iter().flat_map(|n| {
            (0..n.vulnerable.len()).map(move |b| BitFactorRow {
                layer: n.neuron.layer,
                neuron: n.neuron.neuron,
                bit: b as u8,
                bvf_pct: f.bvf(n, b),
                vulnerable: n.vulnerable[b],
                semi: n.semi[b],
            })
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vigor::{neuron_ranges, InputBounds};

    #[test]
    fn float_spelling_round_trips() {
        for v in [
            0.0f32,
            -0.0,
            1.5,
            -5.39,
            1e-40,
            f32::MAX,
            f32::INFINITY,
            f32::NEG_INFINITY,
        ] {
            assert_eq!(parse_f32(&format_f32(v)).unwrap().to_bits(), v.to_bits(), "{v}");
        }
        assert_eq!(format_f32(f32::INFINITY), "inf");
        assert_eq!(format_f32(f32::NEG_INFINITY), "-inf");
        assert_eq!(format_f32(f32::NAN), "nan");
        assert!(parse_f32("nan").unwrap().is_nan());
        assert!(parse_f32("1e39").is_none());
    }

    #[test]
    fn ranges_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranges.csv");
        let b = |lo, hi| InputBounds {
            r_lower: lo,
            r_upper: hi,
        };
        let records = vec![
            RangeRecord {
                range: neuron_ranges(NeuronRef::new(0, 0), &[b(-2.0, 3.0), b(-1.0, f32::INFINITY)]).unwrap(),
                zero_grad_fraction: [0.25, 0.0],
                decision: ScreenDecision::SemiAnalysis,
            },
            RangeRecord {
                range: NeuronVulnerability::unbounded(NeuronRef::new(0, 1)),
                zero_grad_fraction: [1.0, 1.0],
                decision: ScreenDecision::Skip,
            },
        ];
        write_ranges(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("layer,neuron,r_lower,r_upper,vv_lower,vv_upper,case,"));
        assert!(text.contains(",-inf,inf,-inf,inf,"));
        assert_eq!(read_ranges(&path).unwrap(), records);
    }

    #[test]
    fn rejects_inconsistent_case() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ranges.csv");
        std::fs::write(
            &path,
            format!("{}\n0,0,-1,1,-1,1,none/none,0,0,full\n", RANGE_HEADER.join(",")),
        )
        .unwrap();
        assert!(read_ranges(&path).is_err());
    }
}
