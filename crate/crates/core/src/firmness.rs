//! Firmness probing with a two-actuator gripper.
//!
//! The gripper holds an object at a fixed pressure, then modulates the
//! pressure with a square wave. Each actuator's decoupled force estimate is
//! sampled a fixed delay after every pressurisation, and the firmness score is
//! `b·exp(a·(sup ΔF₁ + sup ΔF₂) / (2·TV(P)))`, where `TV(P)` is the total
//! variation of the filtered pressure over the probing window.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{
    simulate_contact_actuation, ActuatorError, ActuatorParams, ContactGeometry, DepthProfile, ObjectModel,
    PressureProfile, RecordError, TimeSeriesRecord,
};
use crate::decoupler::{decoupled_inference, DecouplerError, DecouplerModel};
use crate::par::Execution;
use crate::seed::{rng_from_seed, SeedTree};
use crate::sigproc::{design_cheby1, filter_signal, gradient, FilterSpec, SigprocError};
use crate::tactile::TactileModel;

#[derive(Debug, Error)]
pub enum FirmnessError {
    #[error("grasp failed on actuator {actuator}: hold force {force:.3} N below {threshold} N")]
    GraspFailure { actuator: usize, force: f64, threshold: f64 },
    #[error("pressure total variation is zero")]
    ZeroDenominator,
    #[error("invalid firmness configuration: {0}")]
    InvalidConfig(String),
    #[error("calibration needs at least one probe record")]
    EmptyCalibration,
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Decoupler(#[from] DecouplerError),
    #[error(transparent)]
    Sigproc(#[from] SigprocError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

/// Probing protocol and score constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmnessParams {
    pub a: f64,
    pub b: f64,
    pub hold_kpa: f64,
    pub amplitude_kpa: f64,
    pub period_s: f64,
    /// Delay after each pressurisation at which the force is sampled.
    pub sample_delay_s: f64,
    /// Duration of the initial hold before modulation starts.
    pub hold_s: f64,
    /// Trailing part of the hold averaged into the force baseline.
    pub baseline_s: f64,
    pub grasp_threshold_n: f64,
    pub sample_rate: f64,
}

impl Default for FirmnessParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            hold_kpa: 28.5,
            amplitude_kpa: 4.0,
            period_s: 5.0,
            sample_delay_s: 2.0,
            hold_s: 10.0,
            baseline_s: 0.5,
            grasp_threshold_n: 0.05,
            sample_rate: 50.0,
        }
    }
}

impl FirmnessParams {
    pub fn validate(&self) -> Result<(), FirmnessError> {
        let bad = |m: &str| Err(FirmnessError::InvalidConfig(m.to_string()));
        if !(self.b > 0.0) || !self.a.is_finite() {
            return bad("b must be > 0 and a finite");
        }
        if !(self.amplitude_kpa >= 0.0) || !(self.hold_kpa > 0.0) {
            return bad("hold pressure must be > 0 and amplitude >= 0");
        }
        if !(self.period_s > 0.0) || !(self.sample_delay_s >= 0.0) || self.sample_delay_s >= self.period_s / 2.0 {
            return bad("sampling delay must fall inside the pressurised half-cycle");
        }
        if !(self.baseline_s > 0.0) || self.baseline_s > self.hold_s {
            return bad("baseline window must be positive and within the hold");
        }
        Ok(())
    }

    fn frames(&self, s: f64) -> usize {
        (s * self.sample_rate).round() as usize
    }

    /// Commanded pressure: step to the hold level, then `cycles` square-wave cycles.
    pub fn profile(&self, cycles: usize) -> Result<PressureProfile, FirmnessError> {
        let mut c = vec![self.hold_kpa; self.frames(self.hold_s)];
        let half = self.frames(self.period_s / 2.0);
        for _ in 0..cycles {
            c.extend(std::iter::repeat_n(self.hold_kpa + self.amplitude_kpa, half));
            c.extend(std::iter::repeat_n(self.hold_kpa, self.frames(self.period_s) - half));
        }
        Ok(PressureProfile::from_commands(self.sample_rate, c)?)
    }

    /// Frame indices at which the probing force is sampled.
    pub fn sample_indices(&self, cycles: usize) -> Vec<usize> {
        let (hold, per, delay) = (self.frames(self.hold_s), self.frames(self.period_s), self.frames(self.sample_delay_s));
        (0..cycles).map(|c| hold + c * per + delay).collect()
    }
}

/// One actuator of the gripper with its own decoupler.
#[derive(Debug, Clone)]
pub struct ActuatorUnit {
    pub id: String,
    pub params: ActuatorParams,
    pub decoupler: DecouplerModel,
}

/// Two opposed actuators sharing a tactile model.
#[derive(Debug, Clone)]
pub struct Gripper<'a> {
    pub actuators: [ActuatorUnit; 2],
    pub tactile: &'a TactileModel,
    pub filter: FilterSpec,
}

#[derive(Debug, Clone)]
pub struct ProbeRecord {
    pub object: String,
    pub times: Vec<f64>,
    /// Filtered measured pressure, kPa.
    pub pressure: Vec<f64>,
    /// Estimated force minus the hold baseline, per actuator, N.
    pub delta_force: [Vec<f64>; 2],
    pub baseline: [f64; 2],
    /// `(start, end)` frame ranges of the modulation cycles, end exclusive.
    pub cycles: Vec<(usize, usize)>,
    pub sample_indices: Vec<usize>,
    /// Frame index where modulation starts.
    pub probe_start: usize,
    /// Largest object compression during the session, mm.
    pub peak_indentation_mm: f64,
    pub raw: [TimeSeriesRecord; 2],
}

impl ProbeRecord {
    /// Cycle id per frame; `-1` during the hold.
    pub fn cycle_ids(&self) -> Vec<i64> {
        let mut ids = vec![-1; self.times.len()];
        for (c, &(s, e)) in self.cycles.iter().enumerate() {
            ids[s..e].iter_mut().for_each(|v| *v = c as i64);
        }
        ids
    }

    /// One actuator's raw record in the actuator CSV format plus `cycle_id`.
    pub fn write_csv<W: Write>(&self, actuator: usize, writer: W) -> Result<(), FirmnessError> {
        Ok(self.raw[actuator].write_csv(writer, Some(("cycle_id", &self.cycle_ids())))?)
    }

    /// Per-cycle force deltas at the sampling instants.
    pub fn sampled(&self, actuator: usize) -> Vec<f64> {
        self.sample_indices.iter().map(|&k| self.delta_force[actuator][k]).collect()
    }
}

/// Holds, modulates and samples both actuators against `object`.
pub fn run_probe(
    gripper: &Gripper<'_>,
    object: &ObjectModel,
    params: &FirmnessParams,
    cycles: usize,
    seed: u64,
) -> Result<ProbeRecord, FirmnessError> {
    params.validate()?;
    if cycles == 0 {
        return Err(FirmnessError::InvalidConfig("at least one probing cycle is needed".into()));
    }
    let profile = params.profile(cycles)?;
    let seeds = SeedTree::new(seed);
    let hold = params.frames(params.hold_s);
    let base_from = hold - params.frames(params.baseline_s);
    let mut delta: [Vec<f64>; 2] = Default::default();
    let mut baseline = [0.0; 2];
    let mut raw: Vec<TimeSeriesRecord> = Vec::with_capacity(2);
    let mut peak_indentation: f64 = 0.0;
    for (i, unit) in gripper.actuators.iter().enumerate() {
        let (record, trace) = simulate_contact_actuation(
            &profile,
            object,
            &ContactGeometry::default(),
            &unit.params,
            seeds.derive(&format!("actuator/{i}")),
        )?;
        let estimates = decoupled_inference(&record, Some(&unit.decoupler), gripper.tactile, &gripper.filter)?;
        let force: Vec<f64> = estimates.iter().map(|o| o.as_ref().map_or(0.0, |o| o.normal_n)).collect();
        let base = force[base_from..hold].iter().sum::<f64>() / (hold - base_from) as f64;
        if base < params.grasp_threshold_n {
            return Err(FirmnessError::GraspFailure { actuator: i, force: base, threshold: params.grasp_threshold_n });
        }
        baseline[i] = base;
        delta[i] = force.iter().map(|f| f - base).collect();
        peak_indentation = trace.object_compression.iter().fold(peak_indentation, |m, &x| m.max(x));
        raw.push(record);
    }
    let sos = design_cheby1(&FilterSpec { sample_rate_hz: params.sample_rate, ..gripper.filter })?;
    let pressure = filter_signal(&raw[0].pressures(), &sos);
    let per = params.frames(params.period_s);
    let raw: [TimeSeriesRecord; 2] = raw.try_into().expect("two actuators");
    Ok(ProbeRecord {
        object: object.name.clone(),
        times: raw[0].times(),
        pressure,
        delta_force: delta,
        baseline,
        cycles: (0..cycles).map(|c| (hold + c * per, hold + (c + 1) * per)).collect(),
        sample_indices: params.sample_indices(cycles),
        probe_start: hold,
        peak_indentation_mm: peak_indentation,
        raw,
    })
}

/// `∫|dP/dt| dt` from the frame before `start` to the end of the stream.
pub fn total_variation(pressure: &[f64], start: usize) -> f64 {
    pressure.get(start.saturating_sub(1)..).unwrap_or(&[]).windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmnessResult {
    pub object: String,
    pub phi: f64,
    /// Sampled force deltas per cycle, per actuator.
    pub peak_deltas: [Vec<f64>; 2],
    pub suprema: [f64; 2],
    /// Total variation of the pressure over the probing window, kPa.
    pub denominator: f64,
    /// `(sup₁ + sup₂) / (2·TV)` before scaling by `a`.
    pub ratio: f64,
    /// The denominator is the total variation, not the net pressure change.
    pub total_variation_denominator: bool,
}

/// Firmness score from the sampled force deltas.
pub fn firmness_from(suprema: [f64; 2], tv: f64, params: &FirmnessParams) -> Result<f64, FirmnessError> {
    if !(tv > 0.0) {
        return Err(FirmnessError::ZeroDenominator);
    }
    Ok(params.b * (params.a * (suprema[0] + suprema[1]) / (2.0 * tv)).exp())
}

pub fn estimate_firmness(record: &ProbeRecord, params: &FirmnessParams) -> Result<FirmnessResult, FirmnessError> {
    if record.sample_indices.is_empty() {
        return Err(FirmnessError::InvalidConfig("probe record has no complete cycle".into()));
    }
    let peak_deltas = [record.sampled(0), record.sampled(1)];
    let sup = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let suprema = [sup(&peak_deltas[0]), sup(&peak_deltas[1])];
    let tv = total_variation(&record.pressure, record.probe_start);
    let phi = firmness_from(suprema, tv, params)?;
    Ok(FirmnessResult {
        object: record.object.clone(),
        phi,
        ratio: (suprema[0] + suprema[1]) / (2.0 * tv),
        peak_deltas,
        suprema,
        denominator: tv,
        total_variation_denominator: true,
    })
}

/// Picks `a` so the largest exponent is 4 and `b` so the smallest maps to φ = 1.
pub fn calibrate_ab(records: &[ProbeRecord], base: &FirmnessParams) -> Result<FirmnessParams, FirmnessError> {
    let ratios = records
        .iter()
        .map(|r| estimate_firmness(r, &FirmnessParams { a: 1.0, b: 1.0, ..base.clone() }).map(|f| f.ratio))
        .collect::<Result<Vec<_>, _>>()?;
    calibrate_from_ratios(&ratios, base)
}

pub fn calibrate_from_ratios(ratios: &[f64], base: &FirmnessParams) -> Result<FirmnessParams, FirmnessError> {
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if ratios.is_empty() {
        return Err(FirmnessError::EmptyCalibration);
    }
    if !(max > 0.0) {
        return Err(FirmnessError::InvalidConfig("calibration forces must include a positive response".into()));
    }
    let a = 4.0 / max;
    Ok(FirmnessParams { a, b: (-a * min).exp(), ..base.clone() })
}

/// Load-cell indentation rig used as the firmness reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceProtocol {
    pub speed_mm_s: f64,
    pub depth_mm: f64,
    pub sample_rate: f64,
    pub cycles: usize,
    pub trials: usize,
    pub load_cell_noise_n: f64,
}

impl Default for ReferenceProtocol {
    fn default() -> Self {
        Self { speed_mm_s: 1.5, depth_mm: 2.0, sample_rate: 100.0, cycles: 2, trials: 5, load_cell_noise_n: 0.02 }
    }
}

/// Averaged peak indentation force over all cycles and trials, N.
pub fn reference_indentation(object: &ObjectModel, protocol: &ReferenceProtocol, seed: u64) -> Result<f64, FirmnessError> {
    object.validate()?;
    if protocol.cycles == 0 || protocol.trials == 0 {
        return Err(FirmnessError::InvalidConfig("reference needs at least one cycle and trial".into()));
    }
    let profile =
        DepthProfile::triangular(protocol.depth_mm, protocol.speed_mm_s, protocol.cycles, 0.0, 0.0, protocol.sample_rate)?;
    let half = profile.depths.len() / protocol.cycles;
    let rate = gradient(&profile.depths, 1.0 / protocol.sample_rate);
    let noise = Normal::new(0.0, protocol.load_cell_noise_n.max(0.0)).map_err(|e| FirmnessError::InvalidConfig(e.to_string()))?;
    let mut rng = rng_from_seed(seed);
    let mut total = 0.0;
    for _ in 0..protocol.trials {
        let force: Vec<f64> = profile
            .depths
            .iter()
            .zip(&rate)
            .map(|(d, v)| object.stiffness * d + object.damping * v + noise.sample(&mut rng))
            .collect();
        for c in 0..protocol.cycles {
            let end = ((c + 1) * half).min(force.len());
            total += force[c * half..end].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    Ok(total / (protocol.cycles * protocol.trials) as f64)
}

/// Mean φ over repeated probing trials.
pub fn probe_trials(
    gripper: &Gripper<'_>,
    object: &ObjectModel,
    params: &FirmnessParams,
    cycles: usize,
    trials: usize,
    seeds: &SeedTree,
) -> Result<f64, FirmnessError> {
    let mut sum = 0.0;
    for t in 0..trials {
        let record = run_probe(gripper, object, params, cycles, seeds.derive(&format!("trial/{t}")))?;
        sum += estimate_firmness(&record, params)?.phi;
    }
    Ok(sum / trials.max(1) as f64)
}

/// Calibrates `a` and `b` on a set of objects using one probe each.
pub fn calibrate_on(
    gripper: &Gripper<'_>,
    objects: &[ObjectModel],
    base: &FirmnessParams,
    cycles: usize,
    seeds: &SeedTree,
) -> Result<FirmnessParams, FirmnessError> {
    let records = objects
        .iter()
        .map(|o| run_probe(gripper, o, base, cycles, seeds.derive(&format!("calibration/{}", o.name))))
        .collect::<Result<Vec<_>, _>>()?;
    calibrate_ab(&records, base)
}

/// A simulated fruit with a day-varying stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FruitSpec {
    pub name: String,
    pub stiffness: f64,
    pub damping: f64,
    pub radius: f64,
}

impl FruitSpec {
    pub fn on_day(&self, factor: f64) -> ObjectModel {
        ObjectModel::new(self.name.clone(), self.stiffness * factor, self.damping, self.radius)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProgressiveConfig {
    pub fruits: Vec<FruitSpec>,
    /// Stiffness multiplier per day: softening, then stiffening as the fruit dries.
    pub day_factors: Vec<f64>,
    pub probe_trials: usize,
    pub cycles: usize,
    pub reference: ReferenceProtocol,
}

impl Default for ProgressiveConfig {
    fn default() -> Self {
        let fruit = |name: &str, k: f64| FruitSpec { name: name.into(), stiffness: k, damping: 0.1, radius: 22.0 };
        Self {
            fruits: vec![fruit("fruit-1", 1.25), fruit("fruit-2", 2.0), fruit("fruit-3", 3.2)],
            day_factors: vec![1.0, 0.8, 0.65, 0.75, 0.9],
            probe_trials: 2,
            cycles: 3,
            reference: ReferenceProtocol::default(),
        }
    }
}

/// `days × fruits` matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveResult {
    pub fruits: Vec<String>,
    pub stiffness: Vec<Vec<f64>>,
    pub firmness: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
}

pub fn progressive_experiment(
    gripper: &Gripper<'_>,
    params: &FirmnessParams,
    config: &ProgressiveConfig,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<ProgressiveResult, FirmnessError> {
    let cells: Vec<(usize, usize)> =
        (0..config.day_factors.len()).flat_map(|d| (0..config.fruits.len()).map(move |f| (d, f))).collect();
    let values = exec.map(&cells, |&(d, f)| -> Result<(f64, f64, f64), FirmnessError> {
        let object = config.fruits[f].on_day(config.day_factors[d]);
        let cell = seeds.child(&format!("progressive/day{d}/fruit{f}"));
        let phi = probe_trials(gripper, &object, params, config.cycles, config.probe_trials, &cell)?;
        let reference = reference_indentation(&object, &config.reference, cell.derive("reference"))?;
        Ok((object.stiffness, phi, reference))
    });
    let n = config.fruits.len();
    let mut out = ProgressiveResult {
        fruits: config.fruits.iter().map(|f| f.name.clone()).collect(),
        stiffness: vec![vec![0.0; n]; config.day_factors.len()],
        firmness: vec![vec![0.0; n]; config.day_factors.len()],
        reference: vec![vec![0.0; n]; config.day_factors.len()],
    };
    for (&(d, f), v) in cells.iter().zip(values) {
        let (k, phi, r) = v?;
        out.stiffness[d][f] = k;
        out.firmness[d][f] = phi;
        out.reference[d][f] = r;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndividualConfig {
    pub count: usize,
    /// Stiffness range the fruits are drawn from, N/mm.
    pub stiffness_range: [f64; 2],
    pub damping: f64,
    pub radius: f64,
    pub probe_trials: usize,
    pub cycles: usize,
    pub reference: ReferenceProtocol,
}

impl Default for IndividualConfig {
    fn default() -> Self {
        Self {
            count: 10,
            stiffness_range: [0.8, 3.2],
            damping: 0.1,
            radius: 22.0,
            probe_trials: 1,
            cycles: 3,
            reference: ReferenceProtocol::default(),
        }
    }
}

/// Per-fruit results relabelled from softest to firmest by reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualResult {
    /// Original (arbitrary) label of each fruit, in reported order.
    pub labels: Vec<usize>,
    pub stiffness: Vec<f64>,
    pub firmness: Vec<f64>,
    pub reference: Vec<f64>,
}

pub fn individual_experiment(
    gripper: &Gripper<'_>,
    params: &FirmnessParams,
    config: &IndividualConfig,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<IndividualResult, FirmnessError> {
    let [lo, hi] = config.stiffness_range;
    if !(lo > 0.0 && hi >= lo) || config.count == 0 {
        return Err(FirmnessError::InvalidConfig("need a positive stiffness range and at least one fruit".into()));
    }
    let mut rng = seeds.rng("individual/stiffness");
    let stiffness: Vec<f64> = (0..config.count).map(|_| rng.random_range(lo..=hi)).collect();
    let rows = exec.map_range(config.count, |i| -> Result<(f64, f64), FirmnessError> {
        let object = ObjectModel::new(format!("fruit-{}", i + 1), stiffness[i], config.damping, config.radius);
        let cell = seeds.child(&format!("individual/{i}"));
        let phi = probe_trials(gripper, &object, params, config.cycles, config.probe_trials, &cell)?;
        let reference = reference_indentation(&object, &config.reference, cell.derive("reference"))?;
        Ok((phi, reference))
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..config.count).collect();
    order.sort_by(|&i, &j| rows[i].1.total_cmp(&rows[j].1).then(i.cmp(&j)));
    Ok(IndividualResult {
        labels: order.iter().map(|&i| i + 1).collect(),
        stiffness: order.iter().map(|&i| stiffness[i]).collect(),
        firmness: order.iter().map(|&i| rows[i].0).collect(),
        reference: order.iter().map(|&i| rows[i].1).collect(),
    })
}

/// Default calibration objects: rigid ball, plum-like and cup-like.
pub fn calibration_objects() -> Vec<ObjectModel> {
    vec![ObjectModel::rigid_ball(), ObjectModel::plum(), ObjectModel::cup()]
}

/// Second gripper actuator: same build with slightly different parasitic behaviour.
pub fn second_actuator_params(base: &ActuatorParams) -> ActuatorParams {
    let mut p = base.clone();
    p.parasitic_gain_mm_per_kpa = [0.001, -0.001, base.parasitic_gain_mm_per_kpa[2] * 1.1];
    p.tilt_ratio = base.tilt_ratio * 1.05;
    p
}
