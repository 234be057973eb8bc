use std::sync::OnceLock;

use proptest::prelude::*;
use softmag::actuator::{ActuatorParams, ObjectModel};
use softmag::decoupler::{generate_sweep_dataset, train_decoupler, DecouplerConfig, DecouplerModel, SweepConfig};
use softmag::firmness::*;
use softmag::magnetics::SensorModel;
use softmag::par::Execution;
use softmag::seed::SeedTree;
use softmag::sigproc::FilterSpec;
use softmag::tactile::{make_dataset, simulate_grid, train_multitask, GridProtocol, TactileConfig, TactileModel};

fn quiet() -> ActuatorParams {
    ActuatorParams { pressure_noise_kpa: 0.0, sensor: SensorModel::noiseless(), ..ActuatorParams::default() }
}

/// Two identical noise-free actuators with briefly trained models.
struct Rig {
    decoupler: DecouplerModel,
    tactile: TactileModel,
}

fn rig() -> &'static Rig {
    static CELL: OnceLock<Rig> = OnceLock::new();
    CELL.get_or_init(|| {
        let params = quiet();
        let filter = FilterSpec::default();
        let sweep = generate_sweep_dataset(&params, "A1", &SweepConfig::default(), &filter, 1).unwrap();
        let mut dc = DecouplerConfig { seed: 1, ..DecouplerConfig::default() };
        dc.train.max_epochs = 60;
        let decoupler = train_decoupler(&sweep, &dc, Execution::default()).unwrap();
        let protocol = GridProtocol { cycles: 4, ..GridProtocol::default() };
        let grid = simulate_grid(&params, &protocol, &SeedTree::new(2), Execution::default()).unwrap();
        let mut tc = TactileConfig { dense_widths: vec![32, 16], lstm_hidden: 8, seed: 3, ..TactileConfig::default() };
        tc.train.max_epochs = 15;
        let samples = make_dataset(&grid, Some(&decoupler), &filter, &tc).unwrap();
        let tactile = train_multitask(&samples, &tc, Execution::default()).unwrap().model;
        Rig { decoupler, tactile }
    })
}

fn gripper(r: &Rig) -> Gripper<'_> {
    let unit = |id: &str| ActuatorUnit { id: id.into(), params: quiet(), decoupler: r.decoupler.clone() };
    Gripper { actuators: [unit("A1"), unit("A2")], tactile: &r.tactile, filter: FilterSpec::default() }
}

fn probes() -> &'static Vec<ProbeRecord> {
    static CELL: OnceLock<Vec<ProbeRecord>> = OnceLock::new();
    CELL.get_or_init(|| {
        let g = gripper(rig());
        calibration_objects()
            .iter()
            .map(|o| run_probe(&g, o, &FirmnessParams::default(), 3, 7).unwrap())
            .collect()
    })
}

#[test]
fn hand_evaluated_scores() {
    // 3 cycles, 2 transitions each, 4 kPa per transition.
    let tv = 3.0 * 2.0 * 4.0;
    let p = FirmnessParams { a: 48.0, b: 1.0, ..FirmnessParams::default() };
    assert!((firmness_from([0.5, 0.5], tv, &p).unwrap() - std::f64::consts::E).abs() < 1e-12);
    let b = FirmnessParams { b: 0.37, ..p.clone() };
    assert_eq!(firmness_from([0.0, 0.0], tv, &b).unwrap(), 0.37);
    assert!(matches!(firmness_from([0.2, 0.2], 0.0, &p), Err(FirmnessError::ZeroDenominator)));
}

proptest! {
    #[test]
    fn score_rises_with_force_and_falls_with_variation(
        s1 in -1.0f64..2.0,
        s2 in -1.0f64..2.0,
        bump in 1e-3f64..0.5,
        tv in 1.0f64..50.0,
        a in 0.1f64..40.0,
        b in 0.1f64..5.0,
    ) {
        let p = FirmnessParams { a, b, ..FirmnessParams::default() };
        let base = firmness_from([s1, s2], tv, &p).unwrap();
        prop_assert!(base > 0.0);
        prop_assert!(firmness_from([s1 + bump, s2], tv, &p).unwrap() > base);
        prop_assert!(firmness_from([s1, s2 + bump], tv, &p).unwrap() > base);
        let (lo, hi) = (firmness_from([1.0, 1.0], tv, &p).unwrap(), firmness_from([1.0, 1.0], tv + bump, &p).unwrap());
        prop_assert!(hi < lo);
    }

    #[test]
    fn shared_constants_never_reorder_objects(
        ratios in prop::collection::vec(0.0f64..0.1, 2..8),
        a in 0.1f64..200.0,
        b in 0.01f64..10.0,
    ) {
        let unit = FirmnessParams::default();
        let other = FirmnessParams { a, b, ..FirmnessParams::default() };
        // ratio = sum / (2·TV), so sum = 2·ratio at TV = 1.
        let phi = |p: &FirmnessParams| -> Vec<f64> {
            ratios.iter().map(|r| firmness_from([*r, *r], 1.0, p).unwrap()).collect()
        };
        let (x, y) = (phi(&unit), phi(&other));
        for i in 0..ratios.len() {
            for j in 0..ratios.len() {
                prop_assert_eq!(x[i] < x[j], y[i] < y[j]);
            }
        }
    }

    #[test]
    fn doubling_every_force_halves_a(ratios in prop::collection::vec(1e-4f64..0.1, 1..6)) {
        let base = FirmnessParams::default();
        let once = calibrate_from_ratios(&ratios, &base).unwrap();
        let doubled: Vec<f64> = ratios.iter().map(|r| 2.0 * r).collect();
        let twice = calibrate_from_ratios(&doubled, &base).unwrap();
        prop_assert!((twice.a - once.a / 2.0).abs() <= 1e-12 * once.a);
    }
}

#[test]
fn single_object_calibration_maps_it_to_one() {
    let x = 0.0123;
    let p = calibrate_from_ratios(&[x], &FirmnessParams::default()).unwrap();
    assert!((p.a - 4.0 / x).abs() < 1e-9);
    assert!((p.b - 1.0 / (p.a * x).exp()).abs() < 1e-15);
    assert!((firmness_from([x, x], 1.0, &p).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(calibrate_from_ratios(&[], &p), Err(FirmnessError::EmptyCalibration)));
}

#[test]
fn exponent_spans_zero_to_four_after_calibration() {
    let ratios = [0.002, 0.01, 0.03];
    let p = calibrate_from_ratios(&ratios, &FirmnessParams::default()).unwrap();
    let phi: Vec<f64> = ratios.iter().map(|r| firmness_from([*r, *r], 1.0, &p).unwrap()).collect();
    assert!((phi[0] - 1.0).abs() < 1e-12);
    assert!((phi[2] - (4.0 - p.a * ratios[0]).exp()).abs() < 1e-9);
}

#[test]
fn three_cycles_give_three_samples_per_actuator() {
    for r in probes() {
        assert_eq!(r.cycles.len(), 3);
        assert_eq!(r.sampled(0).len(), 3);
        assert_eq!(r.sampled(1).len(), 3);
        let ids = r.cycle_ids();
        assert_eq!(ids[..r.probe_start].iter().filter(|c| **c != -1).count(), 0);
        assert_eq!(*ids.last().unwrap(), 2);
    }
}

#[test]
fn identical_actuators_see_identical_deltas() {
    for r in probes() {
        for (d1, d2) in r.sampled(0).iter().zip(r.sampled(1)) {
            let mean = 0.5 * (d1.abs() + d2.abs());
            assert!((d1 - d2).abs() <= 0.05 * mean + 1e-12, "{}: {d1} vs {d2}", r.object);
        }
    }
}

#[test]
fn probing_barely_indents_the_object() {
    for (r, o) in probes().iter().zip(calibration_objects()) {
        assert!(r.peak_indentation_mm < 0.1 * o.radius, "{}: {} mm", o.name, r.peak_indentation_mm);
    }
}

#[test]
fn recalibration_is_idempotent() {
    let base = FirmnessParams::default();
    let once = calibrate_ab(probes(), &base).unwrap();
    let twice = calibrate_ab(probes(), &once).unwrap();
    assert_eq!(once, twice);
    let phi = |p: &FirmnessParams| -> Vec<f64> { probes().iter().map(|r| estimate_firmness(r, p).unwrap().phi).collect() };
    assert_eq!(phi(&once), phi(&twice));
    let softest = phi(&once).into_iter().fold(f64::INFINITY, f64::min);
    assert!((softest - 1.0).abs() < 1e-12);
}

#[test]
fn zero_amplitude_leaves_no_probing_delta() {
    let g = gripper(rig());
    let params = FirmnessParams { amplitude_kpa: 0.0, ..FirmnessParams::default() };
    let r = run_probe(&g, &ObjectModel::plum(), &params, 2, 1).unwrap();
    for a in 0..2 {
        assert!(r.sampled(a).iter().all(|d| d.abs() < 1e-6), "{:?}", r.sampled(a));
    }
}

#[test]
fn same_seed_same_session() {
    let g = gripper(rig());
    let p = FirmnessParams::default();
    let a = run_probe(&g, &ObjectModel::cup(), &p, 1, 11).unwrap();
    let b = run_probe(&g, &ObjectModel::cup(), &p, 1, 11).unwrap();
    assert_eq!(a.delta_force, b.delta_force);
    assert_eq!(a.pressure, b.pressure);
}

#[test]
fn weak_grasp_is_reported() {
    let g = gripper(rig());
    let p = FirmnessParams { grasp_threshold_n: 50.0, ..FirmnessParams::default() };
    let err = run_probe(&g, &ObjectModel::plum(), &p, 1, 0).unwrap_err();
    assert!(matches!(err, FirmnessError::GraspFailure { actuator: 0, .. }), "{err}");
    assert!(matches!(
        run_probe(&g, &ObjectModel::plum(), &FirmnessParams::default(), 0, 0),
        Err(FirmnessError::InvalidConfig(_))
    ));
}

#[test]
fn invalid_constants_are_rejected() {
    let bad = [
        FirmnessParams { b: 0.0, ..FirmnessParams::default() },
        FirmnessParams { amplitude_kpa: -1.0, ..FirmnessParams::default() },
        FirmnessParams { sample_delay_s: 3.0, ..FirmnessParams::default() },
    ];
    for p in bad {
        assert!(matches!(p.validate(), Err(FirmnessError::InvalidConfig(_))));
    }
}

#[test]
fn probe_csv_carries_cycle_ids() {
    let r = &probes()[0];
    let mut buf = Vec::new();
    r.write_csv(1, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.ends_with(",cycle_id"), "{header}");
    assert_eq!(text.lines().count(), r.times.len() + 1);
}
