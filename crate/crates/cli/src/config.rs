//! Run configuration shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrange_core::model_io::{read_manifest, Dataset, DatasetSource, SyntheticSpec};
use vrange_core::vigor::AnalysisConfig;

/// Parses `--data`: an IDX directory, or `synthetic:key=value,...` with keys
/// `classes`, `dim`, `per_class`, `sep`, `seed`.
pub fn parse_data(spec: &str) -> Result<DatasetSource> {
    if let Some(rest) = spec.strip_prefix("synthetic:") {
        let mut s = SyntheticSpec {
            num_classes: 3,
            input_dim: 2,
            samples_per_class: 100,
            cluster_separation: 4.0,
            seed: 0,
        };
        for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("expected key=value, got `{kv}`"))?;
            let bad = || format!("bad value for `{k}`: `{v}`");
            match k {
                "classes" => s.num_classes = v.parse().with_context(bad)?,
                "dim" => s.input_dim = v.parse().with_context(bad)?,
                "per_class" => s.samples_per_class = v.parse().with_context(bad)?,
                "sep" => s.cluster_separation = v.parse().with_context(bad)?,
                "seed" => s.seed = v.parse().with_context(bad)?,
                _ => bail!("unknown synthetic key `{k}`"),
            }
        }
        return Ok(DatasetSource::Synthetic(s));
    }
    let dir = Path::new(spec);
    let pick = |stem: &str| -> Result<PathBuf> {
        [format!("{stem}.gz"), stem.to_string()]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
            .with_context(|| format!("{}: no {stem}[.gz]", dir.display()))
    };
    Ok(DatasetSource::Idx {
        images: pick("images-idx3-ubyte")?,
        labels: pick("labels-idx1-ubyte")?,
    })
}

/// Everything a command needs to locate its inputs and tune the analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: PathBuf,
    pub data: String,
    /// Analysis set (set1).
    pub set1: Option<PathBuf>,
    /// Held-out set (set2), validation only.
    pub set2: Option<PathBuf>,
    /// Use only the first `subset` indices of each manifest.
    pub subset: Option<usize>,
    pub out: PathBuf,
    pub seed: u64,
    /// Surface indices to analyze; empty for all.
    pub layers: Vec<usize>,
    #[serde(skip)]
    pub workers: usize,
    pub analysis: AnalysisConfig,
}

impl RunConfig {
    pub fn new(model: impl Into<PathBuf>, data: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        Self {
            model: model.into(),
            data: data.into(),
            set1: None,
            set2: None,
            subset: None,
            out: out.into(),
            seed: 0,
            layers: Vec::new(),
            workers: 0,
            analysis: AnalysisConfig::default(),
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let source = parse_data(&self.data)?;
        source
            .load()
            .with_context(|| format!("loading dataset `{}`", self.data))
    }

    /// The subset named by `manifest`, or the whole dataset when absent.
    pub fn select(&self, data: &Dataset, manifest: Option<&Path>) -> Result<Dataset> {
        let mut indices = match manifest {
            Some(p) => read_manifest(p).with_context(|| format!("reading manifest {}", p.display()))?,
            None => (0..data.len()).collect(),
        };
        if let Some(k) = self.subset {
            indices.truncate(k);
        }
        if indices.is_empty() {
            bail!("selected input set is empty");
        }
        Ok(data.subset(&indices)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_synthetic_spec() {
        let DatasetSource::Synthetic(s) = parse_data("synthetic:classes=4,dim=3,per_class=7,sep=2.5,seed=9").unwrap()
        else {
            panic!()
        };
        assert_eq!((s.num_classes, s.input_dim, s.samples_per_class, s.seed), (4, 3, 7, 9));
        assert_eq!(s.cluster_separation, 2.5);
        assert!(parse_data("synthetic:colour=red").is_err());
        assert!(parse_data("/nonexistent/dir").is_err());
    }
}
