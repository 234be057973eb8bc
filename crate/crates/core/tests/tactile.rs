use std::collections::BTreeSet;
use std::sync::OnceLock;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use softmag::actuator::{
    simulate_indentation, ActuatorParams, DepthProfile, GridKind, GridPoint, POSITION_CLASSES,
};
use softmag::neural::{cross_entropy, mean_loss, mse, Scaler, Target, TrainedModel};
use softmag::par::Execution;
use softmag::seed::{rng_from_seed, SeedTree};
use softmag::sigproc::FilterSpec;
use softmag::tactile::*;

fn small_protocol() -> GridProtocol {
    GridProtocol { cycles: 4, ..GridProtocol::default() }
}

fn grid() -> &'static GridSimulation {
    static CELL: OnceLock<GridSimulation> = OnceLock::new();
    CELL.get_or_init(|| {
        simulate_grid(&ActuatorParams::default(), &small_protocol(), &SeedTree::new(3), Execution::default()).unwrap()
    })
}

fn samples() -> &'static Vec<TactileSample> {
    static CELL: OnceLock<Vec<TactileSample>> = OnceLock::new();
    CELL.get_or_init(|| make_dataset(grid(), None, &FilterSpec::default(), &TactileConfig::default()).unwrap())
}

fn ids(v: &[TactileSample]) -> BTreeSet<u64> {
    v.iter().map(|s| s.id).collect()
}

/// An untrained default network with scalers fitted to the small dataset.
fn scaled_model() -> TactileModel {
    let c = TactileConfig::default();
    let net = build_multitask(c.window, c.classes, &c.dense_widths, c.lstm_hidden, 11).unwrap();
    let s = samples();
    let mut m = TrainedModel::new(net, 11);
    let flux = Scaler::fit(s.iter().flat_map(|x| x.window.iter().map(|f| f.as_slice())), 3, -1.0, 1.0).unwrap();
    let shear: Vec<[f64; 1]> = s.iter().map(|x| [x.shear]).collect();
    let normal: Vec<[f64; 1]> = s.iter().map(|x| [x.normal]).collect();
    m.scalers.insert("flux".into(), flux);
    m.scalers.insert("shear".into(), Scaler::fit(shear.iter().map(|v| v.as_slice()), 1, 0.0, 1.0).unwrap());
    m.scalers.insert("normal".into(), Scaler::fit(normal.iter().map(|v| v.as_slice()), 1, 0.0, 1.0).unwrap());
    TactileModel::new(m).unwrap()
}

#[test]
fn parameter_count_matches_layer_arithmetic() {
    let net = build_multitask(20, 81, &[64, 32], 32, 0).unwrap();
    // Dense branch: 60·64 + 64, 64·32 + 32, 32·1 + 1.
    let dense = (60 * 64 + 64) + (64 * 32 + 32) + (32 + 1);
    // LSTM: four gates over [x; h] plus biases, then 32 → 81.
    let lstm = 4 * 32 * (3 + 32) + 4 * 32 + (32 * 81 + 81);
    assert_eq!(net.param_count(), 2 * dense + lstm);
    assert_eq!(net.param_count(), 19_315);
}

#[test]
fn every_class_lands_in_all_three_splits() {
    let split = stratified_split(samples(), [0.70, 0.15, 0.15], 9);
    for part in [&split.train, &split.validation, &split.test] {
        let classes: BTreeSet<usize> = part.iter().filter_map(|s| s.class).collect();
        assert_eq!(classes.len(), POSITION_CLASSES);
    }
    let total = split.train.len() + split.validation.len() + split.test.len();
    assert_eq!(total, samples().len());
    let groups = |v: &[TactileSample]| v.iter().map(|s| s.group).collect::<BTreeSet<_>>();
    assert!(groups(&split.train).is_disjoint(&groups(&split.test)));
    assert!(groups(&split.validation).is_disjoint(&groups(&split.test)));
}

#[test]
fn split_membership_ignores_dataset_order() {
    let base = stratified_split(samples(), [0.70, 0.15, 0.15], 4);
    let mut shuffled = samples().clone();
    shuffled.shuffle(&mut rng_from_seed(8));
    let again = stratified_split(&shuffled, [0.70, 0.15, 0.15], 4);
    assert_eq!(ids(&base.train), ids(&again.train));
    assert_eq!(ids(&base.validation), ids(&again.validation));
    assert_eq!(ids(&base.test), ids(&again.test));
    let other = stratified_split(samples(), [0.70, 0.15, 0.15], 5);
    assert_ne!(ids(&base.test), ids(&other.test));
}

#[test]
fn labels_follow_the_protocol() {
    let s = samples();
    assert!(s.iter().all(|x| x.window.len() == 20 && x.normal.is_finite() && x.shear.is_finite()));
    assert!(s.iter().any(|x| x.class.is_none()), "baseline windows carry no class");
    assert!(s.iter().filter(|x| x.normal == 0.0).all(|x| x.class.is_none()));
    let p = small_protocol();
    let settle = (p.shear_settle_s * p.sample_rate) as usize;
    for gr in &grid().records {
        let shear = gr.record.shear_forces();
        match gr.point.kind {
            GridKind::Normal => assert!(shear.iter().all(|f| *f == 0.0)),
            GridKind::Shear => {
                assert!(shear[..settle].iter().all(|f| *f == 0.0));
                assert!(shear[shear.len() - settle..].iter().all(|f| *f == 0.0));
                assert!(shear.iter().any(|f| *f > 0.1));
            }
        }
    }
}

#[test]
fn sparse_class_is_rejected() {
    let rec = simulate_indentation(
        GridPoint::center(),
        &DepthProfile::from_depths(50.0, vec![1.0; 25]).unwrap(),
        &ActuatorParams::default(),
        0,
    )
    .unwrap();
    let g = GridSimulation {
        protocol: small_protocol(),
        records: vec![GridRecord { point: GridPoint::center(), record: rec }],
    };
    let config = TactileConfig { stride: 100, ..TactileConfig::default() };
    let err = make_dataset(&g, None, &FilterSpec::default(), &config).unwrap_err();
    assert!(matches!(err, TactileError::InsufficientData { windows: 1, .. }), "{err}");
}

#[test]
fn total_loss_is_the_weighted_sum_of_task_losses() {
    let model = scaled_model();
    let net = &model.model.network;
    let weights = [0.7, 1.3, 0.4];
    let batch: Vec<_> = samples().iter().step_by(37).take(40).collect();
    let encoded: Vec<softmag::neural::Sample> = batch
        .iter()
        .map(|s| {
            let flux = model.model.scaler("flux").unwrap();
            softmag::neural::Sample {
                input: s.window.iter().flat_map(|f| flux.transform(f)).collect(),
                targets: vec![
                    Target::Values(model.model.scaler("shear").unwrap().transform(&[s.shear])),
                    Target::Values(model.model.scaler("normal").unwrap().transform(&[s.normal])),
                    s.class.map_or(Target::Skip, Target::Class),
                ],
            }
        })
        .collect();
    let refs: Vec<_> = encoded.iter().collect();
    let reported = mean_loss(net, &refs, &weights, Execution::Sequential).unwrap();
    let mut parts = [0.0; 3];
    for s in &encoded {
        let y = net.forward(&s.input).unwrap();
        for (b, t) in s.targets.iter().enumerate() {
            parts[b] += match t {
                Target::Values(v) => mse(&y[b], v),
                Target::Class(c) => cross_entropy(&y[b], *c),
                Target::Skip => 0.0,
            };
        }
    }
    let n = encoded.len() as f64;
    let oracle: f64 = parts.iter().zip(weights).map(|(p, w)| w * p / n).sum();
    assert!((reported.total - oracle).abs() < 1e-9, "{} vs {oracle}", reported.total);
}

#[test]
fn forces_are_inverse_scaled_outputs() {
    let model = scaled_model();
    for s in samples().iter().step_by(101) {
        let out = model.infer(&s.window).unwrap();
        let shear = model.model.scaler("shear").unwrap().inverse_transform(&[out.shear_scaled])[0];
        let normal = model.model.scaler("normal").unwrap().inverse_transform(&[out.normal_scaled])[0];
        assert_eq!(out.shear_n, shear);
        assert_eq!(out.normal_n, normal);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn probabilities_sum_to_one(seed in 0u64..1000, scale in 0.1f64..200.0) {
        static MODEL: OnceLock<TactileModel> = OnceLock::new();
        let model = MODEL.get_or_init(scaled_model);
        let mut rng = rng_from_seed(seed);
        let window: Vec<[f64; 3]> =
            (0..model.window()).map(|_| [0.0; 3].map(|_: f64| rng.random_range(-scale..scale))).collect();
        let out = model.infer(&window).unwrap();
        prop_assert_eq!(out.probabilities.len(), 81);
        prop_assert!((out.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(out.shear_n.is_finite() && out.normal_n.is_finite());
        prop_assert!(out.position() < 81);
    }
}

#[test]
fn wrong_window_length_is_an_error() {
    let model = scaled_model();
    let err = model.infer(&[[0.0; 3]; 5]).unwrap_err();
    assert!(matches!(err, TactileError::WindowLength { expected: 20, got: 5 }));
}

fn tiny_config(epochs: usize) -> TactileConfig {
    let mut c = TactileConfig { dense_widths: vec![8], lstm_hidden: 6, ..TactileConfig::default() };
    c.train.max_epochs = epochs;
    c.train.patience = epochs;
    c
}

#[test]
fn seeded_training_reproduces_metrics() {
    let c = tiny_config(2);
    let a = train_multitask(samples(), &c, Execution::Parallel).unwrap();
    let b = train_multitask(samples(), &c, Execution::Sequential).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model, b.model);
    assert!(a.metrics.total_loss.is_finite());
}

#[test]
fn single_class_dataset_is_classified_perfectly() {
    let centre = GridPoint::center().class_index();
    let only: Vec<TactileSample> = samples().iter().filter(|s| s.stratum == centre).cloned().collect();
    let trained = train_multitask(&only, &tiny_config(30), Execution::default()).unwrap();
    assert_eq!(trained.metrics.position_accuracy, 1.0);
    assert!(trained.metrics.classified_windows > 0);
}

#[test]
fn persisted_model_reloads_identically() {
    let model = scaled_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tactile.json");
    model.save(&path).unwrap();
    let back = TactileModel::load(&path).unwrap();
    let w = &samples()[0].window;
    assert_eq!(back.infer(w).unwrap(), model.infer(w).unwrap());
}
