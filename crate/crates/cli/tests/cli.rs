use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vrange_core::fault::required_faults;
use vrange_core::model_io::read_manifest;
use vrange_core::validation::read_campaign;
use vrange_core::vigor::{read_ranges, read_rows, BitFactorRow, LayerFactorRow, NeuronFactorRow};

const SYNTHETIC: &str = "synthetic:classes=3,dim=2,per_class=300,sep=3,seed=11";

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

fn vrange(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrange"))
        .current_dir(root())
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn run_args<'a>(cmd: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        cmd,
        "--model",
        "fixtures/synthetic.vrm",
        "--data",
        SYNTHETIC,
        "--set1",
        "fixtures/synthetic-set1.txt",
        "--set2",
        "fixtures/synthetic-set2.txt",
        "--subset",
        "60",
        "--out",
        out,
    ]
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string()
}

#[test]
fn fixture_training_replays_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(vrange(&["fixture", "--out", out, "synthetic", "mlp-relu"]));
    for name in ["synthetic.vrm", "mlp-relu.vrm", "synthetic-set1.txt", "mnist-set2.txt"] {
        let fresh = std::fs::read(dir.path().join(name)).unwrap();
        let pinned = std::fs::read(root().join("fixtures").join(name)).unwrap();
        assert!(fresh == pinned, "{name} differs from the pinned fixture");
    }
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fixtures.json")).unwrap()).unwrap();
    let relu = reports
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["name"] == "mlp-relu")
        .unwrap();
    assert!(relu["test_accuracy"].as_f64().unwrap() >= 0.90, "{relu}");
}

#[test]
fn split_manifests_are_disjoint() {
    for prefix in ["mnist", "synthetic"] {
        let read = |split: &str| -> Vec<usize> {
            read_manifest(root().join(format!("fixtures/{prefix}-{split}.txt"))).unwrap()
        };
        let (train, test, set1, set2) = (read("train"), read("test"), read("set1"), read("set2"));
        let train_set: HashSet<_> = train.iter().collect();
        assert_eq!(train_set.len(), train.len());
        assert!(test.iter().all(|i| !train_set.contains(i)));
        let s1: HashSet<_> = set1.iter().collect();
        assert!(set2.iter().all(|i| !s1.contains(i)), "{prefix}: set1 and set2 overlap");
        assert!(set1.len() >= 200 && set2.len() >= 200);
    }
}

#[test]
fn analyze_validate_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(vrange(&run_args("analyze", out)));
    ok(vrange(&run_args("validate", out)));
    let p = |f: &str| dir.path().join(f);

    assert_eq!(first_line(&p("factors_layers.csv")), "layer,lvf_pct");
    let layers: Vec<LayerFactorRow> = read_rows(p("factors_layers.csv")).unwrap();
    assert_eq!(layers.len(), 3);
    let neurons: Vec<NeuronFactorRow> = read_rows(p("factors_neurons.csv")).unwrap();
    assert_eq!(neurons.len(), 16 + 16 + 3);
    let bits: Vec<BitFactorRow> = read_rows(p("factors_bits.csv")).unwrap();
    assert_eq!(bits.len(), 35 * 32);
    let ranges = read_ranges(p("ranges.csv")).unwrap();
    assert_eq!(ranges.len(), 35);
    assert!(ranges.iter().all(|r| r.range.r_lower <= 0.0 && r.range.r_upper >= 0.0));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p("analysis.json")).unwrap()).unwrap();
    for key in ["forwards_per_neuron", "skip_fraction", "max_search_evals"] {
        assert!(manifest["summary"].get(key).is_some(), "{key}");
    }
    assert_eq!(manifest["config"]["probe_epsilon"], 10000.0);
    assert_eq!(manifest["hashes"]["model"].as_str().unwrap().len(), 64);

    let metrics = std::fs::read_to_string(p("metrics.json")).unwrap();
    assert!(metrics.contains("\"true_non_critical_pct\"") && metrics.contains("\"true_critical_pct\""));
    assert_eq!(
        first_line(&p("lvf_accuracy.csv")),
        "layer,lvf_pct,acc_loss_same_set,acc_loss_diff_set"
    );
    assert_eq!(
        std::fs::read_to_string(p("lvf_accuracy.csv")).unwrap().lines().count(),
        1 + 3
    );
    for set in [1, 2] {
        let c = read_campaign(p(&format!("campaign_set{set}_layer0.csv")), 0).unwrap();
        assert_eq!(c.faults.len() as u64, required_faults(32 * 16).unwrap());
    }

    let text = ok(vrange(&["report", "--out", out]));
    assert!(text.contains("spearman"));
    assert!(p("report.txt").is_file());
}

#[test]
fn validate_without_ranges_fails_with_cause() {
    let dir = tempfile::tempdir().unwrap();
    let out = vrange(&run_args("validate", dir.path().to_str().unwrap()));
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("ranges file") && err.contains("not found"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = run_args("analyze", out);
    args[2] = "fixtures/missing.vrm";
    assert!(!vrange(&args).status.success());
    let mut args = run_args("analyze", out);
    args.extend(["--zero-grad-threshold", "0.3"]);
    assert!(!vrange(&args).status.success());
}
