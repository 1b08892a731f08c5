use std::path::Path;

use super::campaign::{CampaignResult, FaultRecord, Outcome};
use crate::error::{Error, Result};
use crate::fault::{BitIndex, BitflipDelta, Delta, FaultSpec};
use crate::nn::NeuronRef;
use crate::vigor::{format_f32, parse_f32, Category};

const HEADER: [&str; 11] = [
    "layer",
    "neuron",
    "bit",
    "input_index",
    "golden",
    "faulty",
    "delta",
    "category",
    "outcome",
    "golden_correct",
    "faulty_correct",
];

fn delta_text(d: Delta) -> String {
    match d {
        Delta::Finite(v) => format_f32(v),
        Delta::PlusInf => "inf".into(),
        Delta::MinusInf => "-inf".into(),
        Delta::Nan => "nan".into(),
    }
}

pub fn write_campaign(path: impl AsRef<Path>, campaign: &CampaignResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(HEADER)?;
    for f in &campaign.faults {
        w.write_record([
            f.spec.target.layer.to_string(),
            f.spec.target.neuron.to_string(),
            f.spec.bit.position().to_string(),
            f.spec.input_index.to_string(),
            format_f32(f.delta.golden),
            format_f32(f.delta.faulty),
            delta_text(f.delta.delta),
            f.category.name().into(),
            f.outcome.name().into(),
            u8::from(f.golden_correct).to_string(),
            u8::from(f.faulty_correct).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a campaign dump; `seed` is not stored in the file.
pub fn read_campaign(path: impl AsRef<Path>, seed: u64) -> Result<CampaignResult> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(Error::format(
            "header",
            format!("{}: expected {}", path.display(), HEADER.join(",")),
        ));
    }
    let mut faults = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |i: usize| Error::format(HEADER[i], format!("row {}: `{}`", row + 1, field(i)));
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| bad(i));
        let float = |i: usize| parse_f32(field(i)).ok_or_else(|| bad(i));
        let flag = |i: usize| match field(i) {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(i)),
        };
        let (golden, faulty) = (float(4)?, float(5)?);
        let delta = Delta::from_values(golden, faulty);
        if delta_text(delta) != field(6) {
            return Err(bad(6));
        }
        faults.push(FaultRecord {
            spec: FaultSpec {
                target: NeuronRef::new(int(0)?, int(1)?),
                bit: BitIndex::new(u8::try_from(int(2)?).map_err(|_| bad(2))?).map_err(|_| bad(2))?,
                input_index: int(3)?,
            },
            delta: BitflipDelta { golden, faulty, delta },
            category: match field(7) {
                "non_critical" => Category::NonCritical,
                "semi_critical" => Category::SemiCritical,
                "critical" => Category::Critical,
                _ => return Err(bad(7)),
            },
            outcome: match field(8) {
                "masked" => Outcome::Masked,
                "misclassified" => Outcome::Misclassified,
                _ => return Err(bad(8)),
            },
            golden_correct: flag(9)?,
            faulty_correct: flag(10)?,
        });
    }
    let layer = faults.first().map_or(0, |f| f.spec.target.layer);
    if faults.iter().any(|f| f.spec.target.layer != layer) {
        return Err(Error::format("layer", "campaign dump mixes layers"));
    }
    Ok(CampaignResult { layer, seed, faults })
}
