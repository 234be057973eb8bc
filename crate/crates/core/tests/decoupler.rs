use std::sync::OnceLock;

use proptest::prelude::*;
use softmag::actuator::{simulate_free_actuation, ActuatorParams, ContactLoad, PressureProfile};
use softmag::decoupler::*;
use softmag::firmness::second_actuator_params;
use softmag::magnetics::{FluxSample, SensorModel};
use softmag::par::Execution;
use softmag::sigproc::{design_cheby1, FilterSpec};
use softmag::Vector3;

fn quiet(params: ActuatorParams) -> ActuatorParams {
    ActuatorParams { pressure_noise_kpa: 0.0, sensor: SensorModel::noiseless(), ..params }
}

struct Trained {
    params: ActuatorParams,
    dataset: SweepDataset,
    model: DecouplerModel,
}

fn train_for(params: ActuatorParams, id: &str, seed: u64) -> Trained {
    let dataset = generate_sweep_dataset(&params, id, &SweepConfig::default(), &FilterSpec::default(), seed).unwrap();
    let config = DecouplerConfig { seed, ..DecouplerConfig::default() };
    let model = train_decoupler(&dataset, &config, Execution::default()).unwrap();
    Trained { params, dataset, model }
}

fn first() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| train_for(quiet(ActuatorParams::default()), "A1", 1))
}

fn second() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| train_for(quiet(second_actuator_params(&ActuatorParams::default())), "A2", 2))
}

fn ramp() -> PressureProfile {
    PressureProfile::ramp(35.0, 10.0, 2.0, 10.0, 50.0).unwrap()
}

fn rms(v: &[Vector3<f64>]) -> f64 {
    (v.iter().map(|b| b.norm_squared()).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn sweep_has_one_pair_per_level_and_stays_in_range() {
    let d = &first().dataset;
    assert_eq!(d.pairs.len(), 5 * (351 + 350));
    assert!(d.pairs.iter().all(|p| (0.0..=35.0).contains(&p.pressure)));
    assert_eq!(d.actuator_id, "A1");
    let profile = sweep_profile(&SweepConfig::default()).unwrap();
    let rec = simulate_free_actuation(&profile, &first().params, 0).unwrap();
    assert!(rec.frames().iter().all(|f| f.force == Vector3::zeros()));
}

#[test]
fn noise_free_sweep_is_fitted_to_two_hundredths_of_a_gauss() {
    let rmse = sweep_rmse(&first().model, &first().dataset).unwrap();
    assert!(rmse.iter().all(|e| *e < 0.02), "{rmse:?}");
    assert_eq!(first().model.actuator_id(), Some("A1"));
}

#[test]
fn constant_target_is_learned_as_a_constant() {
    let config = SweepConfig::default();
    let pairs = config
        .levels()
        .iter()
        .take(400)
        .map(|&p| SweepPair { pressure: p, flux: [12.0, -3.5, 250.0] })
        .collect();
    let dataset = SweepDataset { actuator_id: "const".into(), config, pairs };
    let mut cfg = DecouplerConfig { hidden: vec![8], ..DecouplerConfig::default() };
    cfg.train.max_epochs = 600;
    cfg.train.patience = 600;
    let model = train_decoupler(&dataset, &cfg, Execution::Sequential).unwrap();
    let rmse = sweep_rmse(&model, &dataset).unwrap();
    assert!(rmse.iter().all(|e| *e < 1e-3), "{rmse:?}");
}

#[test]
fn seeded_retraining_gives_identical_weights() {
    let d = &first().dataset;
    let mut cfg = DecouplerConfig { seed: 5, ..DecouplerConfig::default() };
    cfg.train.max_epochs = 3;
    let a = train_decoupler(d, &cfg, Execution::Parallel).unwrap();
    let b = train_decoupler(d, &cfg, Execution::Sequential).unwrap();
    assert_eq!(a.model.network.params(), b.model.network.params());
}

#[test]
fn prediction_is_subtracted_to_zero() {
    let m = &first().model;
    let (pred, _) = m.predict(17.3).unwrap();
    let out = decouple(&FluxSample { t: 1.0, b: pred }, 17.3, m).unwrap();
    assert_eq!(out.b, Vector3::zeros());
    assert_eq!(out.t, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_constant_to_the_prediction_returns_the_constant(
        p in 0.0f64..35.0,
        cx in -50.0f64..50.0,
        cy in -50.0f64..50.0,
        cz in -50.0f64..50.0,
    ) {
        let m = &first().model;
        let c = Vector3::new(cx, cy, cz);
        let (pred, _) = m.predict(p).unwrap();
        let out = decouple(&FluxSample { t: 0.0, b: pred + c }, p, m).unwrap();
        prop_assert!((out.b - c).amax() < 1e-9);
    }
}

#[test]
fn contact_component_survives_decoupling() {
    let t = first();
    let params = &t.params;
    let load = ContactLoad { point_mm: [2.0, -1.0], depth: 1.2, shear_mm: [0.0, 0.0] };
    // The model is indexed by filtered pressure, which settles at the filter's DC gain times the true value.
    let dc = design_cheby1(&FilterSpec::default()).unwrap().magnitude(0.0);
    for p in [3.7, 12.34, 28.5] {
        let theta = params.theta(p);
        let free = params.sensor.ideal(&params.magnet_poses(p, theta, None).unwrap()).unwrap();
        let touched = params.sensor.ideal(&params.magnet_poses(p, theta, Some(&load)).unwrap()).unwrap();
        let contact = touched - free;
        assert!(contact.norm() > 0.5, "contact should be visible: {contact}");
        let out = decouple(&FluxSample { t: 0.0, b: touched }, dc * p, &t.model).unwrap();
        assert!((out.b - contact).amax() < 0.05, "p {p}: {} vs {}", out.b, contact);
    }
}

#[test]
fn no_contact_ramp_leaves_under_five_percent_of_the_parasitic_deflection() {
    let t = first();
    let rec = simulate_free_actuation(&ramp(), &t.params, 3).unwrap();
    let rest = rec.frames()[0].flux;
    let decoupled = decouple_record(&rec, &t.model, &FilterSpec::default()).unwrap();
    let raw: Vec<f64> = rec.frames().iter().map(|f| (f.flux - rest).norm()).collect();
    let peak = raw.iter().copied().fold(0.0, f64::max);
    let mut checked = 0;
    for (r, d) in raw.iter().zip(&decoupled) {
        if *r > 0.5 * peak {
            assert!(d.norm() < 0.05 * r, "decoupled {} vs raw {r}", d.norm());
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn decoupling_reduces_no_contact_flux_for_every_actuator() {
    for t in [first(), second()] {
        let noisy = ActuatorParams { pressure_noise_kpa: 0.02, sensor: SensorModel::default(), ..t.params.clone() };
        let rec = simulate_free_actuation(&ramp(), &noisy, 4).unwrap();
        let rest = rec.frames()[0].flux;
        let raw: Vec<Vector3<f64>> = rec.frames().iter().map(|f| f.flux - rest).collect();
        let decoupled = decouple_record(&rec, &t.model, &FilterSpec::default()).unwrap();
        assert!(rms(&decoupled) < rms(&raw), "{}: {} vs {}", t.dataset.actuator_id, rms(&decoupled), rms(&raw));
    }
}

#[test]
fn a_model_applied_to_the_other_actuator_degrades() {
    let (a, b) = (first(), second());
    let rec = simulate_free_actuation(&ramp(), &b.params, 5).unwrap();
    let own = rms(&decouple_record(&rec, &b.model, &FilterSpec::default()).unwrap());
    let foreign = rms(&decouple_record(&rec, &a.model, &FilterSpec::default()).unwrap());
    assert!(foreign > 3.0 * own, "own {own}, foreign {foreign}");
}

#[test]
fn persisted_model_keeps_identity_and_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a1.json");
    first().model.save(&path).unwrap();
    let back = DecouplerModel::load(&path).unwrap();
    assert_eq!(back.actuator_id(), Some("A1"));
    for p in [0.0, 9.9, 35.0] {
        assert_eq!(back.predict(p).unwrap(), first().model.predict(p).unwrap());
    }
}

#[test]
fn untrained_model_cannot_decouple() {
    let m = DecouplerModel::untrained("A1", &[64, 32], 0).unwrap();
    let err = decouple(&FluxSample { t: 0.0, b: Vector3::zeros() }, 1.0, &m);
    assert!(matches!(err, Err(DecouplerError::UntrainedModel)));
}
