//! `analyze`, `validate` and `report`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrange_core::model_io::{load_model, Dataset, DatasetSource};
use vrange_core::nn::NetworkModel;
use vrange_core::validation::{
    lvf_accuracy_correlation, run_campaign, validate, write_campaign, CampaignResult, ValidationMetrics,
};
use vrange_core::vigor::{
    analyze, bitflip_map, read_ranges, with_workers, write_bit_factors, write_layer_factors, write_neuron_factors,
    write_ranges, AnalysisConfig, AnalysisSummary, NeuronVulnerability, RangeRecord, ScreenDecision,
    VulnerabilityFactors,
};

use crate::config::{parse_data, RunConfig};
use crate::manifest::{blob_hash, file_hash, write_json};

pub const RANGES_FILE: &str = "ranges.csv";
pub const LAYER_FACTORS_FILE: &str = "factors_layers.csv";
pub const NEURON_FACTORS_FILE: &str = "factors_neurons.csv";
pub const BIT_FACTORS_FILE: &str = "factors_bits.csv";
pub const ANALYSIS_MANIFEST: &str = "analysis.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PLOT_FILE: &str = "lvf_accuracy.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHashes {
    pub model: String,
    pub data: Vec<(String, String)>,
    pub set1: Option<String>,
    pub set2: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerAnalysis {
    pub layer: usize,
    pub name: String,
    pub neurons: usize,
    pub lvf_pct: f64,
    pub lvf_semi_pct: f64,
    pub skipped: usize,
    pub semi: usize,
    pub closed_form: bool,
}

/// Everything needed to reproduce an analysis run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisManifest {
    pub model: PathBuf,
    pub data: String,
    pub set1: Option<PathBuf>,
    pub subset: Option<usize>,
    pub seed: u64,
    pub inputs: usize,
    pub config: AnalysisConfig,
    pub hashes: InputHashes,
    pub summary: AnalysisSummary,
    pub layers: Vec<LayerAnalysis>,
}

fn hash_inputs(cfg: &RunConfig) -> Result<InputHashes> {
    let data = match parse_data(&cfg.data)? {
        DatasetSource::Idx { images, labels } => vec![
            ("images".to_string(), file_hash(&images)?),
            ("labels".to_string(), file_hash(&labels)?),
        ],
        DatasetSource::Synthetic(spec) => vec![("synthetic".to_string(), blob_hash(spec.id().as_bytes()))],
    };
    let opt = |p: &Option<PathBuf>| p.as_deref().map(file_hash).transpose();
    Ok(InputHashes {
        model: file_hash(&cfg.model)?,
        data,
        set1: opt(&cfg.set1)?,
        set2: opt(&cfg.set2)?,
    })
}

fn load(cfg: &RunConfig) -> Result<(NetworkModel, Dataset)> {
    let model = load_model(&cfg.model).with_context(|| format!("loading model {}", cfg.model.display()))?;
    Ok((model, cfg.load_data()?))
}

fn create_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))
}

#[derive(Debug, Clone)]
pub struct AnalyzeOutput {
    pub manifest: AnalysisManifest,
    pub factors: VulnerabilityFactors,
    pub ranges: Vec<RangeRecord>,
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeOutput> {
    let analysis_cfg = AnalysisConfig {
        seed: cfg.seed,
        ..cfg.analysis.clone()
    };
    analysis_cfg.validate()?;
    let (model, data) = load(cfg)?;
    let set1 = cfg.select(&data, cfg.set1.as_deref())?;
    create_out(cfg)?;

    let (report, factors) = with_workers(cfg.workers, || -> Result<_> {
        let report = analyze(&model, &set1.inputs, &cfg.layers, &analysis_cfg)?;
        let factors = bitflip_map(&model, &set1.inputs, &report.ranges(), &analysis_cfg)?;
        Ok((report, factors))
    })??;

    let ranges: Vec<RangeRecord> = report.neurons.iter().map(RangeRecord::from).collect();
    write_ranges(cfg.out.join(RANGES_FILE), &ranges)?;
    write_layer_factors(cfg.out.join(LAYER_FACTORS_FILE), &factors)?;
    write_neuron_factors(cfg.out.join(NEURON_FACTORS_FILE), &factors)?;
    write_bit_factors(cfg.out.join(BIT_FACTORS_FILE), &factors)?;

    let layers = factors
        .layers
        .iter()
        .map(|l| {
            let neurons = &report.neurons[l.first..l.first + l.neurons];
            LayerAnalysis {
                layer: l.layer,
                name: model.surface_name(l.layer),
                neurons: l.neurons,
                lvf_pct: factors.lvf(l),
                lvf_semi_pct: factors.lvf_semi(l),
                skipped: neurons.iter().filter(|n| n.decision == ScreenDecision::Skip).count(),
                semi: neurons
                    .iter()
                    .filter(|n| n.decision == ScreenDecision::SemiAnalysis)
                    .count(),
                closed_form: neurons.iter().all(|n| n.stats.closed_form),
            }
        })
        .collect();
    let manifest = AnalysisManifest {
        model: cfg.model.clone(),
        data: cfg.data.clone(),
        set1: cfg.set1.clone(),
        subset: cfg.subset,
        seed: cfg.seed,
        inputs: report.inputs,
        config: analysis_cfg,
        hashes: hash_inputs(cfg)?,
        summary: report.summary(),
        layers,
    };
    write_json(&cfg.out.join(ANALYSIS_MANIFEST), &manifest)?;
    Ok(AnalyzeOutput {
        manifest,
        factors,
        ranges,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerValidation {
    pub layer: usize,
    pub name: String,
    pub lvf_pct: f64,
    pub same_set: ValidationMetrics,
    pub diff_set: Option<ValidationMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: PathBuf,
    pub data: String,
    pub seed: u64,
    pub hashes: InputHashes,
    pub layers: Vec<LayerValidation>,
    /// Spearman correlation of LVF and accuracy loss; `None` when undefined.
    pub spearman_same_set: Option<f64>,
    pub spearman_diff_set: Option<f64>,
    pub correlation_note: Option<String>,
}

fn layer_ranges(records: &[RangeRecord], layer: usize) -> Vec<NeuronVulnerability> {
    records
        .iter()
        .filter(|r| r.range.neuron.layer == layer)
        .map(|r| r.range)
        .collect()
}

fn correlation(factors: &VulnerabilityFactors, campaigns: &[CampaignResult]) -> (Option<f64>, Option<String>) {
    match lvf_accuracy_correlation(factors, campaigns) {
        Ok(Some(rho)) => (Some(rho), None),
        Ok(None) => (None, Some("constant LVF or accuracy-loss vector".into())),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

/// Campaigns on set1 (and set2 when given) for every layer in the ranges.
pub fn cmd_validate(cfg: &RunConfig, ranges_path: Option<&Path>) -> Result<ValidationReport> {
    let ranges_path = ranges_path.map_or_else(|| cfg.out.join(RANGES_FILE), Path::to_path_buf);
    if !ranges_path.is_file() {
        bail!("ranges file {} not found; run `analyze` first", ranges_path.display());
    }
    let records = read_ranges(&ranges_path)?;
    let (model, data) = load(cfg)?;
    let set1 = cfg.select(&data, cfg.set1.as_deref())?;
    let set2 = cfg.set2.as_deref().map(|p| cfg.select(&data, Some(p))).transpose()?;
    create_out(cfg)?;

    let mut layers: Vec<usize> = records.iter().map(|r| r.range.neuron.layer).collect();
    layers.dedup();
    if !cfg.layers.is_empty() {
        layers.retain(|l| cfg.layers.contains(l));
    }
    if layers.is_empty() {
        bail!("no layers to validate");
    }
    let ranges: Vec<NeuronVulnerability> = layers.iter().flat_map(|&l| layer_ranges(&records, l)).collect();
    let analysis_cfg = AnalysisConfig {
        seed: cfg.seed,
        ..cfg.analysis.clone()
    };

    let (factors, same, diff) = with_workers(cfg.workers, || -> Result<_> {
        let factors = bitflip_map(&model, &set1.inputs, &ranges, &analysis_cfg)?;
        let run = |set: &Dataset| -> Result<Vec<CampaignResult>> {
            layers
                .iter()
                .map(|&l| Ok(run_campaign(&model, set, l, &layer_ranges(&records, l), cfg.seed)?))
                .collect()
        };
        let same = run(&set1)?;
        let diff = set2.as_ref().map(run).transpose()?;
        Ok((factors, same, diff))
    })??;

    let mut plot = csv::Writer::from_path(cfg.out.join(PLOT_FILE))?;
    plot.write_record(["layer", "lvf_pct", "acc_loss_same_set", "acc_loss_diff_set"])?;
    let mut out_layers = Vec::new();
    for (i, l) in factors.layers.iter().enumerate() {
        write_campaign(cfg.out.join(format!("campaign_set1_layer{}.csv", l.layer)), &same[i])?;
        let same_metrics = validate(&same[i]);
        let diff_metrics = diff.as_ref().map(|d| validate(&d[i]));
        if let Some(d) = &diff {
            write_campaign(cfg.out.join(format!("campaign_set2_layer{}.csv", l.layer)), &d[i])?;
        }
        plot.write_record([
            l.layer.to_string(),
            factors.lvf(l).to_string(),
            same_metrics.accuracy_loss_pct.to_string(),
            fmt_opt(diff_metrics.as_ref().map(|m| m.accuracy_loss_pct)),
        ])?;
        out_layers.push(LayerValidation {
            layer: l.layer,
            name: model.surface_name(l.layer),
            lvf_pct: factors.lvf(l),
            same_set: same_metrics,
            diff_set: diff_metrics,
        });
    }
    plot.flush()?;

    let (spearman_same_set, note) = correlation(&factors, &same);
    let spearman_diff_set = diff.as_ref().and_then(|d| correlation(&factors, d).0);
    let report = ValidationReport {
        model: cfg.model.clone(),
        data: cfg.data.clone(),
        seed: cfg.seed,
        hashes: hash_inputs(cfg)?,
        layers: out_layers,
        spearman_same_set,
        spearman_diff_set,
        correlation_note: note,
    };
    write_json(&cfg.out.join(METRICS_FILE), &report)?;
    Ok(report)
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}"))
}

/// Plain-text summary of whatever `analyze`/`validate` left in `out`.
pub fn cmd_report(out: &Path) -> Result<String> {
    let read = |name: &str| -> Result<Option<String>> {
        let p = out.join(name);
        if p.is_file() {
            Ok(Some(
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
            ))
        } else {
            Ok(None)
        }
    };
    let analysis: Option<AnalysisManifest> = read(ANALYSIS_MANIFEST)?.map(|t| serde_json::from_str(&t)).transpose()?;
    let metrics: Option<ValidationReport> = read(METRICS_FILE)?.map(|t| serde_json::from_str(&t)).transpose()?;
    if analysis.is_none() && metrics.is_none() {
        bail!("{} holds neither {ANALYSIS_MANIFEST} nor {METRICS_FILE}", out.display());
    }
    let mut s = String::new();
    if let Some(a) = &analysis {
        let m = &a.summary;
        s += &format!("model {} ({} inputs)\n", a.model.display(), a.inputs);
        s += &format!(
            "neurons {}  screened {}  skipped {} ({:.1}%)  semi {}  closed-form {}\n",
            m.neurons,
            m.screened_neurons,
            m.skipped_neurons,
            100.0 * m.skip_fraction,
            m.semi_neurons,
            m.closed_form_neurons
        );
        s += &format!(
            "forwards per neuron and input {:.2}  max search evaluations {}  anomalies {}\n\n",
            m.forwards_per_neuron, m.max_search_evals, m.anomalies
        );
        s += "layer  name    neurons  lvf_pct  semi_pct  skipped\n";
        for l in &a.layers {
            s += &format!(
                "{:<6} {:<7} {:>7}  {:>7.3}  {:>8.3}  {:>7}\n",
                l.layer, l.name, l.neurons, l.lvf_pct, l.lvf_semi_pct, l.skipped
            );
        }
        s.push('\n');
    }
    if let Some(v) = &metrics {
        s += "layer  name    faults  non_crit%  true_nc%  true_c%  semi%  acc_loss  | set2 true_nc%  true_c%  acc_loss\n";
        for l in &v.layers {
            let m = &l.same_set;
            s += &format!(
                "{:<6} {:<7} {:>6}  {:>9.2}  {:>8}  {:>7}  {:>5.2}  {:>8.3}",
                l.layer,
                l.name,
                m.faults,
                m.non_critical_fraction,
                pct(m.true_non_critical_pct),
                pct(m.true_critical_pct),
                m.semi_fraction,
                m.accuracy_loss_pct
            );
            if let Some(d) = &l.diff_set {
                s += &format!(
                    "  | {:>13}  {:>7}  {:>8.3}",
                    pct(d.true_non_critical_pct),
                    pct(d.true_critical_pct),
                    d.accuracy_loss_pct
                );
            }
            s.push('\n');
        }
        s += &format!(
            "\nspearman(lvf, accuracy loss): set1 {}  set2 {}\n",
            pct(v.spearman_same_set),
            pct(v.spearman_diff_set)
        );
        if let Some(note) = &v.correlation_note {
            s += &format!("note: {note}\n");
        }
    }
    fs::write(out.join("report.txt"), &s)?;
    Ok(s)
}
