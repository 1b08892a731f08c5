use vrange_core::fault::{BitIndex, Delta, FaultSpec, WORD_LENGTH};
use vrange_core::model_io::{
    gen_synthetic, train_fixture, Architecture, Dataset, LayerTemplate, SyntheticSpec, TrainConfig,
};
use vrange_core::nn::{NetworkModel, NeuronRef};
use vrange_core::validation::{run_campaign, validate, CampaignResult, FaultRecord, Outcome};
use vrange_core::vigor::{analyze, with_workers, AnalysisConfig, Category, NeuronVulnerability};

fn blobs() -> Dataset {
    gen_synthetic(&SyntheticSpec {
        num_classes: 3,
        input_dim: 4,
        samples_per_class: 40,
        cluster_separation: 4.0,
        seed: 21,
    })
    .unwrap()
}

fn wide_model(data: &Dataset) -> NetworkModel {
    let arch = Architecture {
        input_shape: vec![4],
        num_classes: 3,
        layers: vec![
            LayerTemplate::Dense { out_features: 100 },
            LayerTemplate::Relu,
            LayerTemplate::Dense { out_features: 3 },
        ],
    };
    let cfg = TrainConfig {
        name: "wide".into(),
        seed: 8,
        epochs: 10,
        learning_rate: 0.05,
        batch_size: 16,
    };
    train_fixture(&arch, data, &cfg).unwrap()
}

fn unbounded(model: &NetworkModel, layer: usize) -> Vec<NeuronVulnerability> {
    (0..model.surfaces()[layer].len())
        .map(|n| NeuronVulnerability::unbounded(NeuronRef::new(layer, n)))
        .collect()
}

#[test]
fn hundred_neuron_layer_runs_2401_faults() {
    let data = blobs();
    let model = wide_model(&data);
    let result = run_campaign(&model, &data, 0, &unbounded(&model, 0), 3).unwrap();
    assert_eq!(result.faults.len(), 2401);
    assert!(result
        .faults
        .iter()
        .all(|f| (f.spec.bit.position() as usize) < WORD_LENGTH));
    assert!(result
        .faults
        .iter()
        .all(|f| f.spec.target.neuron < 100 && f.spec.input_index < data.len()));
}

#[test]
fn zero_deltas_are_masked_and_nans_critical() {
    let data = blobs();
    let model = wide_model(&data);
    let result = run_campaign(&model, &data, 0, &unbounded(&model, 0), 5).unwrap();
    // Dead ReLUs output +0.0, so sign flips give zero deltas.
    let zeros: Vec<_> = result
        .faults
        .iter()
        .filter(|f| f.delta.delta == Delta::Finite(0.0))
        .collect();
    assert!(!zeros.is_empty());
    for f in zeros {
        assert_eq!(f.category, Category::NonCritical);
        assert_eq!(f.outcome, Outcome::Masked);
    }
    for f in result.faults.iter().filter(|f| f.delta.delta == Delta::Nan) {
        assert_eq!(f.category, Category::Critical);
    }
}

#[test]
fn campaigns_replay_across_seeds_and_workers() {
    let data = blobs();
    let model = wide_model(&data);
    let ranges = unbounded(&model, 0);
    let a = with_workers(1, || run_campaign(&model, &data, 0, &ranges, 9).unwrap()).unwrap();
    let b = with_workers(2, || run_campaign(&model, &data, 0, &ranges, 9).unwrap()).unwrap();
    // NaN deltas defeat PartialEq; compare the printed form instead.
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    let c = run_campaign(&model, &data, 0, &ranges, 10).unwrap();
    assert_ne!(format!("{:?}", a.faults), format!("{:?}", c.faults));
}

#[test]
fn analysis_ranges_predict_campaign_outcomes() {
    let data = blobs();
    let model = wide_model(&data);
    let cfg = AnalysisConfig::default();
    let report = analyze(&model, &data.inputs, &[0, 1], &cfg).unwrap();
    let ranges = report.ranges();
    for layer in 0..2 {
        let layer_ranges: Vec<_> = ranges.iter().copied().filter(|r| r.neuron.layer == layer).collect();
        let m = validate(&run_campaign(&model, &data, layer, &layer_ranges, 1).unwrap());
        if let Some(p) = m.true_non_critical_pct {
            assert!(p >= 99.0, "layer {layer}: {m:?}");
        }
        if let Some(p) = m.true_critical_pct {
            assert!(p >= 99.0, "layer {layer}: {m:?}");
        }
        assert!(m.non_critical_fraction > 50.0);
    }
}

fn record(category: Category, outcome: Outcome) -> FaultRecord {
    let golden = 1.0;
    FaultRecord {
        spec: FaultSpec {
            target: NeuronRef::new(0, 0),
            bit: BitIndex::new(3).unwrap(),
            input_index: 0,
        },
        delta: vrange_core::fault::BitflipDelta {
            golden,
            faulty: golden,
            delta: Delta::Finite(0.0),
        },
        category,
        outcome,
        golden_correct: true,
        faulty_correct: outcome == Outcome::Masked,
    }
}

#[test]
fn truth_metric_arithmetic() {
    let mut faults = vec![record(Category::NonCritical, Outcome::Masked); 999];
    faults.push(record(Category::NonCritical, Outcome::Misclassified));
    faults.extend(vec![record(Category::SemiCritical, Outcome::Misclassified); 10]);
    let m = validate(&CampaignResult {
        layer: 0,
        seed: 0,
        faults,
    });
    assert_eq!(m.true_non_critical_pct, Some(99.9));
    assert_eq!(m.true_critical_pct, None);
    assert_eq!(m.semi.total(), 10);
    assert!((m.accuracy_loss_pct - 100.0 * 11.0 / 1010.0).abs() < 1e-9);

    let all = vec![record(Category::NonCritical, Outcome::Masked); 50];
    assert_eq!(
        validate(&CampaignResult {
            layer: 0,
            seed: 0,
            faults: all
        })
        .true_non_critical_pct,
        Some(100.0)
    );
}
