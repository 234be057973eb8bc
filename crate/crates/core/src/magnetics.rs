//! Point-dipole magnetic model of the sensing layer.
//!
//! Lengths are millimetres, magnetic moments A·mm² and flux densities Gauss.
//! In these units the dipole prefactor μ0/4π is exactly 1 G·mm³/(A·mm²)
//! (1e-7 T·m/A × 1e-6 A·m² / 1e-9 m³ = 1e-4 T = 1 G).

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// μ0/4π expressed in G·mm³/(A·mm²).
pub const MU0_OVER_4PI: f64 = 1.0;

/// Closest approach allowed between a dipole and an evaluation point.
pub const MIN_SEPARATION_MM: f64 = 0.5;

/// Ferrite disturbance at contact, Gauss.
pub const FERRITE_PEAK_GAUSS: f64 = 0.4;

/// Decay length of the ferrite disturbance, mm. Puts 3.5 mm just under 0.1 G.
pub const FERRITE_DECAY_MM: f64 = 5.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("evaluation point {distance:.4} mm from a dipole (minimum {MIN_SEPARATION_MM} mm)")]
    Singularity { distance: f64 },
    #[error("magnet list is empty")]
    EmptyMagnetList,
    #[error("invalid magnet configuration: {0}")]
    InvalidConfiguration(String),
}

/// Position and moment of one permanent magnet, in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetPose {
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl MagnetPose {
    pub fn new(position: Vector3<f64>, moment: Vector3<f64>) -> Self {
        Self { position, moment }
    }
}

/// One tri-axial Hall reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxSample {
    pub t: f64,
    pub b: Vector3<f64>,
}

/// A nearby ferromagnetic object that offsets the sensor reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSource {
    pub distance: f64,
    pub peak_offset: Vector3<f64>,
    pub decay_scale: f64,
}

impl InterferenceSource {
    /// Ferrite sheet approaching along the sensing normal.
    pub fn ferrite(distance: f64) -> Self {
        Self {
            distance,
            peak_offset: Vector3::new(0.0, 0.0, FERRITE_PEAK_GAUSS),
            decay_scale: FERRITE_DECAY_MM,
        }
    }

    /// Offset added to the sensor reading: `peak · (d0 / (d0 + d))³`.
    pub fn offset(&self) -> Vector3<f64> {
        let d = self.distance.max(0.0);
        let ratio = self.decay_scale / (self.decay_scale + d);
        self.peak_offset * ratio.powi(3)
    }
}

/// Ferrite disturbance vector at the given approach distance.
pub fn ferrite_disturbance(distance: f64) -> Vector3<f64> {
    InterferenceSource::ferrite(distance).offset()
}

/// Field of a point dipole at `point`.
pub fn dipole_field(magnet: &MagnetPose, point: &Vector3<f64>) -> Result<Vector3<f64>, MagneticsError> {
    let r = point - magnet.position;
    let dist = r.norm();
    if !(dist >= MIN_SEPARATION_MM) {
        return Err(MagneticsError::Singularity { distance: dist });
    }
    let r_hat = r / dist;
    let m = &magnet.moment;
    let b = (r_hat * (3.0 * m.dot(&r_hat)) - m) * (MU0_OVER_4PI / (dist * dist * dist));
    Ok(b)
}

/// Sum of dipole fields.
///
/// Terms are accumulated in a canonical order (lexicographic on position, then
/// moment) so any permutation of `magnets` gives a bit-identical sum.
pub fn superpose(magnets: &[MagnetPose], point: &Vector3<f64>) -> Result<Vector3<f64>, MagneticsError> {
    if magnets.is_empty() {
        return Err(MagneticsError::EmptyMagnetList);
    }
    let mut order: Vec<usize> = (0..magnets.len()).collect();
    order.sort_by(|&a, &b| canonical_cmp(&magnets[a], &magnets[b]));
    let mut total = Vector3::zeros();
    for i in order {
        total += dipole_field(&magnets[i], point)?;
    }
    Ok(total)
}

fn canonical_cmp(a: &MagnetPose, b: &MagnetPose) -> std::cmp::Ordering {
    a.position
        .iter()
        .chain(a.moment.iter())
        .zip(b.position.iter().chain(b.moment.iter()))
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Geometry of the four embedded magnets.
///
/// Magnets sit at the corners of a square `height_mm` above the sensor locus.
/// The square centre is displaced laterally from the locus by
/// `center_offset_mm`; a perfectly centred layout makes mirrored contact
/// points produce identical readings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetLayout {
    pub side_mm: f64,
    pub height_mm: f64,
    pub center_offset_mm: [f64; 2],
    /// Magnetisation sign per corner, ordered (+x,+y), (+x,-y), (-x,+y), (-x,-y).
    pub signs: [f64; 4],
    /// Rest-state |B| at the locus after moment calibration.
    pub rest_flux_gauss: f64,
}

impl Default for MagnetLayout {
    fn default() -> Self {
        Self {
            side_mm: 6.0,
            height_mm: 4.0,
            center_offset_mm: [1.2, 0.7],
            signs: [1.0, 1.0, -1.0, -1.0],
            rest_flux_gauss: 10.0,
        }
    }
}

impl MagnetLayout {
    pub fn validate(&self) -> Result<(), MagneticsError> {
        let bad = |m: &str| Err(MagneticsError::InvalidConfiguration(m.to_string()));
        if !(self.side_mm > 0.0) {
            return bad("side_mm must be positive");
        }
        if !(self.height_mm >= MIN_SEPARATION_MM) {
            return bad("height_mm must clear the singularity guard");
        }
        if !(self.rest_flux_gauss > 0.0) {
            return bad("rest_flux_gauss must be positive");
        }
        if self.signs.iter().any(|s| *s != 1.0 && *s != -1.0) {
            return bad("signs must be +1 or -1");
        }
        Ok(())
    }

    /// Corner positions in the sensor frame.
    pub fn positions(&self) -> [Vector3<f64>; 4] {
        let h = self.side_mm / 2.0;
        let [ox, oy] = self.center_offset_mm;
        let z = self.height_mm;
        [
            Vector3::new(ox + h, oy + h, z),
            Vector3::new(ox + h, oy - h, z),
            Vector3::new(ox - h, oy + h, z),
            Vector3::new(ox - h, oy - h, z),
        ]
    }

    /// Lateral centre of the magnet square.
    pub fn centroid(&self) -> Vector3<f64> {
        Vector3::new(self.center_offset_mm[0], self.center_offset_mm[1], self.height_mm)
    }

    /// Moment magnitude that puts the rest-state |B| at `rest_flux_gauss`.
    pub fn calibrated_moment(&self) -> Result<f64, MagneticsError> {
        let unit: Vec<MagnetPose> = self
            .positions()
            .iter()
            .zip(self.signs)
            .map(|(p, s)| MagnetPose::new(*p, Vector3::new(0.0, 0.0, s)))
            .collect();
        let b = superpose(&unit, &Vector3::zeros())?.norm();
        if b <= 0.0 {
            return Err(MagneticsError::InvalidConfiguration(
                "layout produces no field at the sensor locus".into(),
            ));
        }
        Ok(self.rest_flux_gauss / b)
    }

    /// Rest poses with calibrated moments normal to the sensing plane.
    pub fn rest_poses(&self) -> Result<[MagnetPose; 4], MagneticsError> {
        self.validate()?;
        let m = self.calibrated_moment()?;
        let pos = self.positions();
        Ok(std::array::from_fn(|i| {
            MagnetPose::new(pos[i], Vector3::new(0.0, 0.0, self.signs[i] * m))
        }))
    }
}

/// Hall-sensor model at the origin of the sensor frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// Per-axis Gaussian noise, Gauss.
    pub noise_sigma: f64,
    /// Reading magnitude is clipped to this value, Gauss.
    pub saturation: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { noise_sigma: 0.01, saturation: 800.0 }
    }
}

impl SensorModel {
    pub fn noiseless() -> Self {
        Self { noise_sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), MagneticsError> {
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(MagneticsError::InvalidConfiguration("noise_sigma must be >= 0".into()));
        }
        if !(self.saturation > 0.0) {
            return Err(MagneticsError::InvalidConfiguration("saturation must be positive".into()));
        }
        Ok(())
    }

    /// Noise-free field at the locus, before interference and saturation.
    pub fn ideal(&self, magnets: &[MagnetPose]) -> Result<Vector3<f64>, MagneticsError> {
        superpose(magnets, &Vector3::zeros())
    }

    /// One reading: superposed field + Gaussian noise + interference, clipped to saturation.
    ///
    /// Always draws exactly three normals from `rng` so streams stay aligned
    /// when the noise level changes.
    pub fn sense<R: Rng + ?Sized>(
        &self,
        magnets: &[MagnetPose],
        t: f64,
        rng: &mut R,
        interference: Option<&InterferenceSource>,
    ) -> Result<FluxSample, MagneticsError> {
        let mut b = self.ideal(magnets)?;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let noise = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        b += noise * self.noise_sigma;
        if let Some(src) = interference {
            b += src.offset();
        }
        let mag = b.norm();
        if mag > self.saturation {
            b *= self.saturation / mag;
        }
        Ok(FluxSample { t, b })
    }
}
