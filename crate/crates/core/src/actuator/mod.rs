//! Reduced-order pneumatic actuator.
//!
//! The model has three coupled parts:
//!
//! - free bending: `θ(p) = θ_max·(1 − exp(−p/p_c))` on a constant-curvature arc;
//! - parasitic magnet motion: an affine displacement in pressure plus a moment
//!   tilt of `tilt_ratio·θ` about the bending (x) axis;
//! - contact: a pressure-driven drive displacement `u(p)` pushes through the
//!   actuator body (`k_act`), the foam pad (`k_foam`, stiffer towards the rim)
//!   and the object (`k_obj`, optional damper) in series. Foam compression at
//!   the contact point moves, shifts and tilts the nearby magnets.

mod grid;
mod kinematics;
mod record;
mod simulate;

pub use grid::{GridKind, GridPoint, NORMAL_GRID, POSITION_CLASSES, SHEAR_GRID};
pub use kinematics::{bending_angle_from_tip, tip_from_bending_angle};
pub use record::{Frame, RecordError, TimeSeriesRecord, CSV_HEADER};
pub use simulate::{
    simulate_blocked_actuation, simulate_contact_actuation, simulate_free_actuation, simulate_indentation,
    simulate_shear, ContactTrace, DepthProfile, PressureProfile, ShearProfile,
};

use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnetics::{FluxSample, InterferenceSource, MagnetLayout, MagnetPose, MagneticsError, SensorModel};

/// Highest pressure the model accepts, kPa.
pub const MAX_PRESSURE_KPA: f64 = 40.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActuatorError {
    #[error("pressure {0} kPa outside [0, {MAX_PRESSURE_KPA}]")]
    PressureOutOfRange(f64),
    #[error("tip at the origin has no bending angle")]
    DegenerateTip,
    #[error("grid point ({row}, {col}) outside a {side}x{side} grid")]
    OutOfGrid { row: usize, col: usize, side: usize },
    #[error("contact equilibrium did not converge")]
    NonConvergence,
    #[error("invalid actuator parameters: {0}")]
    InvalidParams(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
}

/// Spring(-damper) model of a grasped or probed object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectModel {
    pub name: String,
    /// N/mm
    pub stiffness: f64,
    /// N·s/mm
    pub damping: f64,
    /// mm
    pub radius: f64,
}

impl ObjectModel {
    pub fn new(name: impl Into<String>, stiffness: f64, damping: f64, radius: f64) -> Self {
        Self { name: name.into(), stiffness, damping, radius }
    }

    /// PLA-like ball.
    pub fn rigid_ball() -> Self {
        Self::new("rigid-ball", 200.0, 0.0, 20.0)
    }

    pub fn plum() -> Self {
        Self::new("plum", 2.0, 0.2, 22.0)
    }

    /// Empty disposable cup.
    pub fn cup() -> Self {
        Self::new("cup", 0.2, 0.05, 40.0)
    }

    /// Half-sphere probe used for blocked actuation.
    pub fn rigid_probe() -> Self {
        Self::new("rigid-probe", 200.0, 0.0, 15.0)
    }

    pub fn validate(&self) -> Result<(), ActuatorError> {
        if !(self.stiffness > 0.0) || !self.stiffness.is_finite() {
            return Err(ActuatorError::InvalidParams(format!("object {}: stiffness must be > 0", self.name)));
        }
        if !(self.damping >= 0.0) || !self.damping.is_finite() {
            return Err(ActuatorError::InvalidParams(format!("object {}: damping must be >= 0", self.name)));
        }
        if !(self.radius > 0.0) {
            return Err(ActuatorError::InvalidParams(format!("object {}: radius must be > 0", self.name)));
        }
        Ok(())
    }
}

/// Where an object meets the pad, and the free gap before contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactGeometry {
    pub point: GridPoint,
    pub gap_mm: f64,
}

impl Default for ContactGeometry {
    fn default() -> Self {
        Self { point: GridPoint::center(), gap_mm: 0.0 }
    }
}

/// Local load applied to the foam pad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactLoad {
    /// Lateral contact position, mm from the pad centre.
    pub point_mm: [f64; 2],
    /// Foam compression at the contact point, mm.
    pub depth: f64,
    /// Tangential pad displacement, mm.
    pub shear_mm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorParams {
    pub length_mm: f64,
    pub theta_max_rad: f64,
    pub theta_pressure_scale_kpa: f64,
    /// First-order lag of the pressure plant.
    pub plant_time_constant_s: f64,
    /// Foam pad stiffness at the centre, N/mm.
    pub k_foam: f64,
    /// Fractional stiffening at the grid corners (radially quadratic).
    pub peripheral_stiffening: f64,
    /// Parasitic magnet displacement per kPa, (x, y, z) mm/kPa.
    pub parasitic_gain_mm_per_kpa: [f64; 3],
    /// Magnet tilt about the bending axis per radian of bending.
    pub tilt_ratio: f64,
    /// Lateral reach of a contact on the magnet layer, mm.
    pub contact_sigma_mm: f64,
    /// Magnet sink per mm of foam compression (at zero lateral distance).
    pub contact_gain_normal: f64,
    /// Radial magnet spreading per mm of compression.
    pub contact_gain_lateral: f64,
    /// Magnet tilt towards the contact, relative to the local surface slope.
    pub contact_gain_tilt: f64,
    /// Magnet drag per mm of tangential pad displacement.
    pub shear_coupling: f64,
    /// Tangential pad stiffness, N/mm.
    pub k_shear: f64,
    /// Asymptotic drive displacement pushing into a contact, mm.
    pub drive_max_mm: f64,
    pub drive_pressure_scale_kpa: f64,
    /// Actuator body stiffness in series with the contact, N/mm.
    pub k_actuator: f64,
    /// Lag between plant pressure and drive displacement.
    pub drive_time_constant_s: f64,
    pub grid_spacing_mm: f64,
    /// Gaussian noise of the pressure transducer, kPa.
    pub pressure_noise_kpa: f64,
    pub layout: MagnetLayout,
    pub sensor: SensorModel,
}

/// Steady blocking force against the rigid probe at 35 kPa after calibration.
pub const BLOCKING_FORCE_35KPA: f64 = 1.55;

impl Default for ActuatorParams {
    fn default() -> Self {
        let mut p = Self {
            length_mm: 80.0,
            theta_max_rad: 2.8,
            theta_pressure_scale_kpa: 25.0,
            plant_time_constant_s: 0.5,
            k_foam: 1.0,
            peripheral_stiffening: 0.15,
            parasitic_gain_mm_per_kpa: [0.0, 0.0, -0.02],
            tilt_ratio: 0.3,
            contact_sigma_mm: 6.0,
            contact_gain_normal: 0.4,
            contact_gain_lateral: 0.5,
            contact_gain_tilt: 2.0,
            shear_coupling: 0.3,
            k_shear: 0.6,
            drive_max_mm: 1.0,
            drive_pressure_scale_kpa: 40.0,
            k_actuator: 20.0,
            drive_time_constant_s: 0.5,
            grid_spacing_mm: 2.0,
            pressure_noise_kpa: 0.02,
            layout: MagnetLayout::default(),
            sensor: SensorModel::default(),
        };
        p.calibrate_blocking_force(BLOCKING_FORCE_35KPA, 35.0, &ObjectModel::rigid_probe());
        p
    }
}

impl ActuatorParams {
    pub fn validate(&self) -> Result<(), ActuatorError> {
        let positive = [
            ("length_mm", self.length_mm),
            ("theta_max_rad", self.theta_max_rad),
            ("theta_pressure_scale_kpa", self.theta_pressure_scale_kpa),
            ("plant_time_constant_s", self.plant_time_constant_s),
            ("k_foam", self.k_foam),
            ("contact_sigma_mm", self.contact_sigma_mm),
            ("k_shear", self.k_shear),
            ("drive_max_mm", self.drive_max_mm),
            ("drive_pressure_scale_kpa", self.drive_pressure_scale_kpa),
            ("k_actuator", self.k_actuator),
            ("drive_time_constant_s", self.drive_time_constant_s),
            ("grid_spacing_mm", self.grid_spacing_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ActuatorError::InvalidParams(format!("{name} must be positive and finite")));
            }
        }
        if self.theta_max_rad > std::f64::consts::PI {
            return Err(ActuatorError::InvalidParams("theta_max_rad must not exceed pi".into()));
        }
        if !(self.pressure_noise_kpa >= 0.0) {
            return Err(ActuatorError::InvalidParams("pressure_noise_kpa must be >= 0".into()));
        }
        if self.peripheral_stiffening < 0.0 {
            return Err(ActuatorError::InvalidParams("peripheral_stiffening must be >= 0".into()));
        }
        self.layout.validate()?;
        self.sensor.validate()?;
        Ok(())
    }

    /// Free bending angle at plant pressure `p`.
    pub fn theta(&self, p: f64) -> f64 {
        self.theta_max_rad * (1.0 - (-p / self.theta_pressure_scale_kpa).exp())
    }

    /// Drive displacement pushing into a contact at pressure `p`.
    pub fn drive_displacement(&self, p: f64) -> f64 {
        self.drive_max_mm * (1.0 - (-p / self.drive_pressure_scale_kpa).exp())
    }

    /// Foam stiffness at a lateral pad position.
    pub fn local_stiffness(&self, point_mm: [f64; 2]) -> f64 {
        let half = (NORMAL_GRID / 2) as f64 * self.grid_spacing_mm;
        let r2_max = 2.0 * half * half;
        let r2 = point_mm[0] * point_mm[0] + point_mm[1] * point_mm[1];
        self.k_foam * (1.0 + self.peripheral_stiffening * r2 / r2_max)
    }

    /// Compliance of actuator body plus foam at `point_mm`, mm/N.
    pub fn body_compliance(&self, point_mm: [f64; 2]) -> f64 {
        1.0 / self.k_actuator + 1.0 / self.local_stiffness(point_mm)
    }

    /// Sets `drive_max_mm` so the steady force against `object` at `pressure` equals `force`.
    pub fn calibrate_blocking_force(&mut self, force: f64, pressure: f64, object: &ObjectModel) {
        let compliance = self.body_compliance([0.0, 0.0]) + 1.0 / object.stiffness;
        let shape = 1.0 - (-pressure / self.drive_pressure_scale_kpa).exp();
        self.drive_max_mm = force * compliance / shape;
    }

    /// Magnet poses for a pressure, bending angle and optional contact load.
    pub fn magnet_poses(&self, p: f64, theta: f64, contact: Option<&ContactLoad>) -> Result<[MagnetPose; 4], ActuatorError> {
        let rest = self.layout.rest_poses()?;
        let sigma = self.contact_sigma_mm;
        let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), self.tilt_ratio * theta);
        let parasitic = Vector3::from(self.parasitic_gain_mm_per_kpa) * p;
        let poses = rest.map(|m| {
            let mut pos = m.position;
            let mut moment = m.moment;
            if let Some(c) = contact {
                let off = [pos.x - c.point_mm[0], pos.y - c.point_mm[1]];
                let g = (-(off[0] * off[0] + off[1] * off[1]) / (2.0 * sigma * sigma)).exp();
                let sink = self.contact_gain_normal * c.depth * g;
                pos.z -= sink;
                let spread = self.contact_gain_lateral * c.depth * g / sigma;
                pos.x += spread * off[0] + self.shear_coupling * c.shear_mm[0] * g;
                pos.y += spread * off[1] + self.shear_coupling * c.shear_mm[1] * g;
                // The depressed surface leans towards the contact; magnets follow its normal.
                let lean = self.contact_gain_tilt * sink / (sigma * sigma);
                let normal = Vector3::new(-lean * off[0], -lean * off[1], 1.0).normalize();
                moment = normal * moment.z.signum() * moment.norm();
            }
            MagnetPose::new(pos + parasitic, tilt * moment)
        });
        Ok(poses)
    }
}

/// Quasi-static series-spring solution for a contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactSolution {
    pub force: f64,
    pub foam_compression: f64,
    pub object_compression: f64,
}

/// Snapshot of the actuator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorState {
    pub pressure: f64,
    pub theta: f64,
    /// (y, z) in mm
    pub tip: [f64; 2],
    pub magnet_poses: [MagnetPose; 4],
    /// Foam compression at the contact point, mm.
    pub indentation: f64,
    pub object_compression: f64,
    pub contact_force: f64,
    pub contact_point: Option<GridPoint>,
}

impl ActuatorState {
    /// Sensor reading for this state.
    pub fn sense<R: Rng + ?Sized>(
        &self,
        sensor: &SensorModel,
        t: f64,
        rng: &mut R,
        interference: Option<&InterferenceSource>,
    ) -> Result<FluxSample, ActuatorError> {
        Ok(sensor.sense(&self.magnet_poses, t, rng, interference)?)
    }
}

fn check_pressure(p: f64) -> Result<(), ActuatorError> {
    if !(0.0..=MAX_PRESSURE_KPA).contains(&p) {
        return Err(ActuatorError::PressureOutOfRange(p));
    }
    Ok(())
}

/// Series-spring equilibrium against `object` at plant pressure `p`.
pub fn solve_contact(
    p: f64,
    params: &ActuatorParams,
    object: &ObjectModel,
    geometry: &ContactGeometry,
) -> Result<ContactSolution, ActuatorError> {
    check_pressure(p)?;
    object.validate()?;
    let point_mm = geometry.point.position_mm(params.grid_spacing_mm);
    let k_local = params.local_stiffness(point_mm);
    let compliance = params.body_compliance(point_mm) + 1.0 / object.stiffness;
    let reach = (params.drive_displacement(p) - geometry.gap_mm).max(0.0);
    let force = reach / compliance;
    if !force.is_finite() {
        return Err(ActuatorError::NonConvergence);
    }
    Ok(ContactSolution { force, foam_compression: force / k_local, object_compression: force / object.stiffness })
}

/// Quasi-static actuator state at plant pressure `p`.
pub fn pressure_to_state(
    p: f64,
    params: &ActuatorParams,
    contact: Option<(&ObjectModel, ContactGeometry)>,
) -> Result<ActuatorState, ActuatorError> {
    check_pressure(p)?;
    let theta = params.theta(p);
    let tip = tip_from_bending_angle(params.length_mm, theta);
    let (solution, point) = match contact {
        Some((object, geometry)) => (Some(solve_contact(p, params, object, &geometry)?), Some(geometry.point)),
        None => (None, None),
    };
    let load = solution.zip(point).map(|(s, pt)| ContactLoad {
        point_mm: pt.position_mm(params.grid_spacing_mm),
        depth: s.foam_compression,
        shear_mm: [0.0, 0.0],
    });
    let magnet_poses = params.magnet_poses(p, theta, load.as_ref())?;
    Ok(ActuatorState {
        pressure: p,
        theta,
        tip,
        magnet_poses,
        indentation: solution.map_or(0.0, |s| s.foam_compression),
        object_compression: solution.map_or(0.0, |s| s.object_compression),
        contact_force: solution.map_or(0.0, |s| s.force),
        contact_point: point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ideal_flux(state: &ActuatorState) -> Vector3<f64> {
        SensorModel::noiseless().ideal(&state.magnet_poses).unwrap()
    }

    #[test]
    fn rest_state() {
        let params = ActuatorParams::default();
        let s = pressure_to_state(0.0, &params, None).unwrap();
        assert_eq!(s.theta, 0.0);
        assert_eq!(s.magnet_poses, params.layout.rest_poses().unwrap());
        assert_eq!(s.contact_force, 0.0);
        assert!((ideal_flux(&s).norm() - params.layout.rest_flux_gauss).abs() < 1e-12);
    }

    #[test]
    fn pressure_guard() {
        let params = ActuatorParams::default();
        assert!(matches!(pressure_to_state(-0.1, &params, None), Err(ActuatorError::PressureOutOfRange(_))));
        assert!(matches!(pressure_to_state(40.5, &params, None), Err(ActuatorError::PressureOutOfRange(_))));
    }

    #[test]
    fn parasitic_sweep_is_monotone() {
        let params = ActuatorParams::default();
        let base = ideal_flux(&pressure_to_state(0.0, &params, None).unwrap());
        let deltas: Vec<Vector3<f64>> = (0..=30)
            .map(|p| ideal_flux(&pressure_to_state(p as f64, &params, None).unwrap()) - base)
            .collect();
        for w in deltas.windows(2) {
            assert!(w[1].x > w[0].x, "Bx grows with pressure");
            assert!(w[1].y > w[0].y, "By grows with pressure");
            assert!(w[1].z < w[0].z, "Bz falls with pressure");
        }
        // Parasitic drift is of the same order as contact signals (Gauss scale).
        assert!(deltas[30].norm() > 1.0 && deltas[30].norm() < 5.0);
    }

    #[test]
    fn blocking_force_against_rigid_probe() {
        let params = ActuatorParams::default();
        let probe = ObjectModel::rigid_probe();
        let s = pressure_to_state(35.0, &params, Some((&probe, ContactGeometry::default()))).unwrap();
        assert!((s.contact_force - 1.4).abs() <= 0.2, "force {}", s.contact_force);
        assert!((s.contact_force - BLOCKING_FORCE_35KPA).abs() < 1e-12);
    }

    #[test]
    fn contact_without_pressure_has_no_force() {
        let params = ActuatorParams::default();
        let s = pressure_to_state(0.0, &params, Some((&ObjectModel::plum(), ContactGeometry::default()))).unwrap();
        assert_eq!(s.contact_force, 0.0);
        assert_eq!(s.indentation, 0.0);
    }

    #[test]
    fn gap_delays_contact() {
        let params = ActuatorParams::default();
        let geom = ContactGeometry { gap_mm: 10.0, ..Default::default() };
        let s = pressure_to_state(35.0, &params, Some((&ObjectModel::rigid_ball(), geom))).unwrap();
        assert_eq!(s.contact_force, 0.0);
    }

    #[test]
    fn softer_objects_see_less_force() {
        let params = ActuatorParams::default();
        let g = ContactGeometry::default();
        let f = |o: &ObjectModel| solve_contact(30.0, &params, o, &g).unwrap().force;
        assert!(f(&ObjectModel::rigid_ball()) > f(&ObjectModel::plum()));
        assert!(f(&ObjectModel::plum()) > f(&ObjectModel::cup()));
    }

    #[test]
    fn default_params_validate() {
        ActuatorParams::default().validate().unwrap();
        let mut bad = ActuatorParams::default();
        bad.k_foam = 0.0;
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn series_spring_equilibrium(p in 0.0f64..40.0, k_obj in 0.05f64..300.0, row in 0usize..9, col in 0usize..9) {
            let params = ActuatorParams::default();
            let obj = ObjectModel::new("x", k_obj, 0.0, 10.0);
            let geom = ContactGeometry { point: GridPoint::normal(row, col).unwrap(), gap_mm: 0.0 };
            let sol = solve_contact(p, &params, &obj, &geom).unwrap();
            let k_local = params.local_stiffness(geom.point.position_mm(params.grid_spacing_mm));
            prop_assert!(sol.force >= 0.0);
            prop_assert!((sol.force - k_local * sol.foam_compression).abs() < 1e-9);
            prop_assert!((sol.force - k_obj * sol.object_compression).abs() < 1e-9);
        }

        #[test]
        fn theta_and_force_monotone(p in 0.0f64..39.0, dp in 0.001f64..1.0) {
            let params = ActuatorParams::default();
            prop_assert!(params.theta(p + dp) >= params.theta(p));
            let g = ContactGeometry::default();
            let probe = ObjectModel::rigid_probe();
            let f0 = solve_contact(p, &params, &probe, &g).unwrap().force;
            let f1 = solve_contact(p + dp, &params, &probe, &g).unwrap().force;
            prop_assert!(f1 >= f0);
        }

        #[test]
        fn no_contact_flux_depends_on_pressure_only(p in 0.0f64..40.0) {
            let params = ActuatorParams::default();
            let a = ideal_flux(&pressure_to_state(p, &params, None).unwrap());
            let b = ideal_flux(&pressure_to_state(p, &params, None).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
