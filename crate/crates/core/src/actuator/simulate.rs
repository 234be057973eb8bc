//! Scripted simulations of the actuator test protocols.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::record::{Frame, TimeSeriesRecord};
use super::{
    ActuatorError, ActuatorParams, ContactGeometry, ContactLoad, GridPoint, ObjectModel, MAX_PRESSURE_KPA,
};
use crate::seed::rng_from_seed;

fn check_rate(sample_rate: f64) -> Result<(), ActuatorError> {
    if sample_rate != 50.0 && sample_rate != 100.0 {
        return Err(ActuatorError::InvalidProfile(format!("sample rate {sample_rate} Hz, expected 50 or 100")));
    }
    Ok(())
}

fn frames_for(duration_s: f64, sample_rate: f64) -> usize {
    (duration_s * sample_rate).round().max(0.0) as usize
}

/// Commanded pressure, one value per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureProfile {
    pub sample_rate: f64,
    pub commands: Vec<f64>,
}

impl PressureProfile {
    pub fn from_commands(sample_rate: f64, commands: Vec<f64>) -> Result<Self, ActuatorError> {
        let p = Self { sample_rate, commands };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        check_rate(self.sample_rate)?;
        if self.commands.is_empty() {
            return Err(ActuatorError::InvalidProfile("empty pressure profile".into()));
        }
        if let Some(p) = self.commands.iter().find(|p| !(0.0..=MAX_PRESSURE_KPA).contains(*p)) {
            return Err(ActuatorError::PressureOutOfRange(*p));
        }
        Ok(())
    }

    pub fn constant(level: f64, duration_s: f64, sample_rate: f64) -> Result<Self, ActuatorError> {
        Self::from_commands(sample_rate, vec![level; frames_for(duration_s, sample_rate)])
    }

    /// Zero lead, jump to `level` and hold, then back to zero.
    pub fn step(level: f64, lead_s: f64, hold_s: f64, tail_s: f64, sample_rate: f64) -> Result<Self, ActuatorError> {
        let mut c = vec![0.0; frames_for(lead_s, sample_rate)];
        c.extend(std::iter::repeat_n(level, frames_for(hold_s, sample_rate)));
        c.extend(std::iter::repeat_n(0.0, frames_for(tail_s, sample_rate)));
        Self::from_commands(sample_rate, c)
    }

    /// Linear ramp 0 → `peak` → 0 with a hold at the top.
    pub fn ramp(peak: f64, rise_s: f64, hold_s: f64, fall_s: f64, sample_rate: f64) -> Result<Self, ActuatorError> {
        let nr = frames_for(rise_s, sample_rate).max(1);
        let nf = frames_for(fall_s, sample_rate).max(1);
        let mut c: Vec<f64> = (0..nr).map(|k| peak * k as f64 / nr as f64).collect();
        c.extend(std::iter::repeat_n(peak, frames_for(hold_s, sample_rate) + 1));
        c.extend((1..=nf).map(|k| peak * (1.0 - k as f64 / nf as f64)));
        Self::from_commands(sample_rate, c)
    }

    /// Holds each level for `dwell_s`.
    pub fn staircase(levels: &[f64], dwell_s: f64, sample_rate: f64) -> Result<Self, ActuatorError> {
        let n = frames_for(dwell_s, sample_rate).max(1);
        let c = levels.iter().flat_map(|&l| std::iter::repeat_n(l, n)).collect();
        Self::from_commands(sample_rate, c)
    }

    pub fn duration_s(&self) -> f64 {
        self.commands.len() as f64 / self.sample_rate
    }
}

/// Indenter depth into the pad, one value per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthProfile {
    pub sample_rate: f64,
    pub depths: Vec<f64>,
}

impl DepthProfile {
    pub fn from_depths(sample_rate: f64, depths: Vec<f64>) -> Result<Self, ActuatorError> {
        check_rate(sample_rate)?;
        if depths.is_empty() {
            return Err(ActuatorError::InvalidProfile("empty depth profile".into()));
        }
        if depths.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(ActuatorError::InvalidProfile("depths must be finite and >= 0".into()));
        }
        Ok(Self { sample_rate, depths })
    }

    /// Raised-cosine press-release cycles between zero-depth lead and tail.
    pub fn cyclic(
        max_depth: f64,
        period_s: f64,
        cycles: usize,
        lead_s: f64,
        tail_s: f64,
        sample_rate: f64,
    ) -> Result<Self, ActuatorError> {
        let per = frames_for(period_s, sample_rate).max(2);
        let mut d = vec![0.0; frames_for(lead_s, sample_rate)];
        d.extend((0..per * cycles).map(|k| {
            let phase = (k % per) as f64 / per as f64;
            0.5 * max_depth * (1.0 - (2.0 * PI * phase).cos())
        }));
        d.extend(std::iter::repeat_n(0.0, frames_for(tail_s, sample_rate)));
        Self::from_depths(sample_rate, d)
    }

    /// Constant-speed load-unload triangles.
    pub fn triangular(
        max_depth: f64,
        speed_mm_s: f64,
        cycles: usize,
        lead_s: f64,
        tail_s: f64,
        sample_rate: f64,
    ) -> Result<Self, ActuatorError> {
        if !(speed_mm_s > 0.0) {
            return Err(ActuatorError::InvalidProfile("indentation speed must be > 0".into()));
        }
        let half = frames_for(max_depth / speed_mm_s, sample_rate).max(1);
        let mut d = vec![0.0; frames_for(lead_s, sample_rate)];
        for _ in 0..cycles {
            d.extend((0..half).map(|k| max_depth * k as f64 / half as f64));
            d.extend((0..half).map(|k| max_depth * (1.0 - k as f64 / half as f64)));
        }
        d.extend(std::iter::repeat_n(0.0, frames_for(tail_s, sample_rate).max(1)));
        Self::from_depths(sample_rate, d)
    }
}

/// Fixed compression with tangential back-and-forth translations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShearProfile {
    pub sample_rate: f64,
    pub depths: Vec<f64>,
    /// Tangential pad displacement per frame, mm.
    pub offsets: Vec<[f64; 2]>,
}

impl ShearProfile {
    /// Presses to `compression`, then runs raised-cosine translations of
    /// `amplitude` along eight directions in turn, then releases.
    pub fn cyclic(
        compression: f64,
        amplitude: f64,
        period_s: f64,
        cycles: usize,
        settle_s: f64,
        sample_rate: f64,
    ) -> Result<Self, ActuatorError> {
        check_rate(sample_rate)?;
        if !(compression >= 0.0) || !(amplitude >= 0.0) {
            return Err(ActuatorError::InvalidProfile("compression and amplitude must be >= 0".into()));
        }
        let per = frames_for(period_s, sample_rate).max(2);
        let ramp = frames_for(settle_s, sample_rate).max(1);
        let mut depths = Vec::new();
        let mut offsets = Vec::new();
        let ease = |k: usize| 0.5 * (1.0 - (PI * k as f64 / ramp as f64).cos());
        for k in 0..ramp {
            depths.push(compression * ease(k));
            offsets.push([0.0, 0.0]);
        }
        for k in 0..per * cycles {
            let dir = (k / per) % 8;
            let angle = dir as f64 * PI / 4.0;
            let s = 0.5 * amplitude * (1.0 - (2.0 * PI * (k % per) as f64 / per as f64).cos());
            depths.push(compression);
            offsets.push([s * angle.cos(), s * angle.sin()]);
        }
        for k in 0..ramp {
            depths.push(compression * (1.0 - ease(k + 1)));
            offsets.push([0.0, 0.0]);
        }
        depths.extend(std::iter::repeat_n(0.0, ramp));
        offsets.extend(std::iter::repeat_n([0.0, 0.0], ramp));
        Ok(Self { sample_rate, depths, offsets })
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        check_rate(self.sample_rate)?;
        if self.depths.is_empty() || self.depths.len() != self.offsets.len() {
            return Err(ActuatorError::InvalidProfile("shear profile streams must be non-empty and aligned".into()));
        }
        if self.depths.iter().any(|d| !(*d >= 0.0)) {
            return Err(ActuatorError::InvalidProfile("depths must be >= 0".into()));
        }
        Ok(())
    }
}

/// Internal mechanics of a contact simulation, aligned with the record frames.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContactTrace {
    pub plant_pressure: Vec<f64>,
    pub foam_compression: Vec<f64>,
    pub object_compression: Vec<f64>,
}

struct Noise {
    pressure: Option<Normal<f64>>,
}

impl Noise {
    fn new(params: &ActuatorParams) -> Self {
        let pressure = (params.pressure_noise_kpa > 0.0).then(|| Normal::new(0.0, params.pressure_noise_kpa).unwrap());
        Self { pressure }
    }

    fn pressure<R: Rng>(&self, p: f64, rng: &mut R) -> f64 {
        match &self.pressure {
            Some(n) => p + n.sample(rng),
            None => p,
        }
    }
}

/// Discrete first-order lag, exact for piecewise-constant input.
struct Lag {
    alpha: f64,
    value: f64,
}

impl Lag {
    fn new(time_constant: f64, dt: f64) -> Self {
        Self { alpha: 1.0 - (-dt / time_constant).exp(), value: 0.0 }
    }

    /// Returns the current value, then advances towards `target`.
    fn step(&mut self, target: f64) -> f64 {
        let v = self.value;
        self.value += self.alpha * (target - self.value);
        v
    }
}

/// Free bending: no contact, zero force stream.
pub fn simulate_free_actuation(
    profile: &PressureProfile,
    params: &ActuatorParams,
    seed: u64,
) -> Result<TimeSeriesRecord, ActuatorError> {
    profile.validate()?;
    params.validate()?;
    let mut rng = rng_from_seed(seed);
    let noise = Noise::new(params);
    let dt = 1.0 / profile.sample_rate;
    let mut plant = Lag::new(params.plant_time_constant_s, dt);
    let mut record = TimeSeriesRecord::new(profile.sample_rate).expect("validated rate");
    for (k, &cmd) in profile.commands.iter().enumerate() {
        let t = k as f64 * dt;
        let p = plant.step(cmd);
        let poses = params.magnet_poses(p, params.theta(p), None)?;
        let flux = params.sensor.sense(&poses, t, &mut rng, None)?;
        let pressure = noise.pressure(p, &mut rng);
        push(&mut record, Frame { t, pressure, flux: flux.b, force: Vector3::zeros(), label: None });
    }
    Ok(record)
}

/// Pressurised actuator pushing into an object; returns the record and the internal mechanics.
///
/// The drive displacement lags the plant pressure. The object is a Kelvin-Voigt
/// element integrated with implicit Euler; on loss of contact it relaxes freely.
pub fn simulate_contact_actuation(
    profile: &PressureProfile,
    object: &ObjectModel,
    geometry: &ContactGeometry,
    params: &ActuatorParams,
    seed: u64,
) -> Result<(TimeSeriesRecord, ContactTrace), ActuatorError> {
    profile.validate()?;
    params.validate()?;
    object.validate()?;
    let point = GridPoint::new(geometry.point.kind, geometry.point.row, geometry.point.col)?;
    let point_mm = point.position_mm(params.grid_spacing_mm);
    let k_local = params.local_stiffness(point_mm);
    let compliance = params.body_compliance(point_mm);
    let label = point.class_index();

    let mut rng = rng_from_seed(seed);
    let noise = Noise::new(params);
    let dt = 1.0 / profile.sample_rate;
    let mut plant = Lag::new(params.plant_time_constant_s, dt);
    let mut drive = Lag::new(params.drive_time_constant_s, dt);
    let viscous = object.damping / dt;
    let mut x_obj = 0.0;

    let mut record = TimeSeriesRecord::new(profile.sample_rate).expect("validated rate");
    let mut trace = ContactTrace::default();
    for (k, &cmd) in profile.commands.iter().enumerate() {
        let t = k as f64 * dt;
        let p = plant.step(cmd);
        let u = drive.step(params.drive_displacement(p));
        let reach = (u - geometry.gap_mm).max(0.0);
        let engaged = (reach / compliance + viscous * x_obj) / (1.0 / compliance + object.stiffness + viscous);
        let force = (reach - engaged) / compliance;
        let force = if force > 0.0 {
            x_obj = engaged;
            force
        } else {
            x_obj = viscous * x_obj / (object.stiffness + viscous);
            0.0
        };
        let depth = force / k_local;
        let load = ContactLoad { point_mm, depth, shear_mm: [0.0, 0.0] };
        let poses = params.magnet_poses(p, params.theta(p), (depth > 0.0).then_some(&load))?;
        let flux = params.sensor.sense(&poses, t, &mut rng, None)?;
        let pressure = noise.pressure(p, &mut rng);
        push(
            &mut record,
            Frame {
                t,
                pressure,
                flux: flux.b,
                force: Vector3::new(0.0, 0.0, force),
                label: (force > 0.0).then_some(label),
            },
        );
        trace.plant_pressure.push(p);
        trace.foam_compression.push(depth);
        trace.object_compression.push(x_obj);
    }
    Ok((record, trace))
}

/// Blocked actuation against a probe touching the pad centre.
pub fn simulate_blocked_actuation(
    profile: &PressureProfile,
    probe: &ObjectModel,
    params: &ActuatorParams,
    seed: u64,
) -> Result<TimeSeriesRecord, ActuatorError> {
    simulate_contact_actuation(profile, probe, &ContactGeometry::default(), params, seed).map(|(r, _)| r)
}

/// Unpressurised pad indented at a grid point; normal force follows the local foam stiffness.
pub fn simulate_indentation(
    point: GridPoint,
    profile: &DepthProfile,
    params: &ActuatorParams,
    seed: u64,
) -> Result<TimeSeriesRecord, ActuatorError> {
    let shear = ShearProfile {
        sample_rate: profile.sample_rate,
        depths: profile.depths.clone(),
        offsets: vec![[0.0, 0.0]; profile.depths.len()],
    };
    simulate_shear(point, &shear, params, seed)
}

/// Indentation with tangential pad translation; shear force is `k_shear` times the offset.
pub fn simulate_shear(
    point: GridPoint,
    profile: &ShearProfile,
    params: &ActuatorParams,
    seed: u64,
) -> Result<TimeSeriesRecord, ActuatorError> {
    profile.validate()?;
    params.validate()?;
    let point = GridPoint::new(point.kind, point.row, point.col)?;
    let point_mm = point.position_mm(params.grid_spacing_mm);
    let k_local = params.local_stiffness(point_mm);
    let label = point.class_index();
    let mut rng = rng_from_seed(seed);
    let noise = Noise::new(params);
    let dt = 1.0 / profile.sample_rate;
    let mut record = TimeSeriesRecord::new(profile.sample_rate).expect("validated rate");
    for (k, (&depth, &offset)) in profile.depths.iter().zip(&profile.offsets).enumerate() {
        let t = k as f64 * dt;
        let in_contact = depth > 0.0;
        let shear_mm = if in_contact { offset } else { [0.0, 0.0] };
        let load = ContactLoad { point_mm, depth, shear_mm };
        let poses = params.magnet_poses(0.0, 0.0, in_contact.then_some(&load))?;
        let flux = params.sensor.sense(&poses, t, &mut rng, None)?;
        let force = Vector3::new(params.k_shear * shear_mm[0], params.k_shear * shear_mm[1], k_local * depth);
        let pressure = noise.pressure(0.0, &mut rng);
        push(&mut record, Frame { t, pressure, flux: flux.b, force, label: in_contact.then_some(label) });
    }
    Ok(record)
}

fn push(record: &mut TimeSeriesRecord, frame: Frame) {
    // Timestamps are generated as k·dt, so spacing holds by construction.
    record.push(frame).expect("uniform, finite frame");
}
