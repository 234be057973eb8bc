//! Chebyshev Type I low-pass design (analog prototype + bilinear transform)
//! and causal second-order-section filtering.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::SigprocError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub order: usize,
    /// Passband ripple, dB.
    pub passband_ripple_db: f64,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { order: 4, passband_ripple_db: 0.5, cutoff_hz: 5.0, sample_rate_hz: 50.0 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), SigprocError> {
        let bad = |m: &str| Err(SigprocError::InvalidSpec(m.to_string()));
        if self.order == 0 {
            return bad("order must be >= 1");
        }
        if !(self.passband_ripple_db > 0.0) || !self.passband_ripple_db.is_finite() {
            return bad("passband ripple must be > 0 dB");
        }
        if !(self.sample_rate_hz > 0.0) || !self.sample_rate_hz.is_finite() {
            return bad("sample rate must be > 0");
        }
        if !(self.cutoff_hz > 0.0) || self.cutoff_hz >= self.sample_rate_hz / 2.0 {
            return bad("cutoff must lie in (0, Nyquist)");
        }
        Ok(())
    }

    /// Ripple factor ε with `Rp = 10·log10(1 + ε²)`.
    pub fn epsilon(&self) -> f64 {
        (10f64.powf(self.passband_ripple_db / 10.0) - 1.0).sqrt()
    }

    /// Prewarped analog cutoff, rad/s.
    pub fn prewarped_cutoff(&self) -> f64 {
        2.0 * self.sample_rate_hz * (PI * self.cutoff_hz / self.sample_rate_hz).tan()
    }

    /// Closed-form digital magnitude `1/√(1 + ε²·T_n²(Ω))` with bilinear frequency warping.
    pub fn ideal_magnitude(&self, f_hz: f64) -> f64 {
        let omega = (PI * f_hz / self.sample_rate_hz).tan() / (PI * self.cutoff_hz / self.sample_rate_hz).tan();
        let t = if omega.abs() <= 1.0 {
            (self.order as f64 * omega.acos()).cos()
        } else {
            (self.order as f64 * omega.abs().acosh()).cosh() * if omega < 0.0 && self.order % 2 == 1 { -1.0 } else { 1.0 }
        };
        1.0 / (1.0 + self.epsilon().powi(2) * t * t).sqrt()
    }
}

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub b: [f64; 3],
    /// `[1, a1, a2]`
    pub a: [f64; 3],
}

impl Section {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = Complex::new(self.b[0], 0.0) + z_inv * self.b[1] + z2 * self.b[2];
        let den = Complex::new(self.a[0], 0.0) + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    /// Poles of the section (one of them is zero for a first-order section).
    fn poles(&self) -> [Complex<f64>; 2] {
        let (a1, a2) = (self.a[1], self.a[2]);
        let disc = Complex::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
    }
}

/// Cascade of sections with an overall gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub spec: FilterSpec,
    pub gain: f64,
    pub sections: Vec<Section>,
}

impl SosFilter {
    /// Complex response at frequency `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex<f64> {
        let w = 2.0 * PI * f_hz / self.spec.sample_rate_hz;
        let z_inv = Complex::new(w.cos(), -w.sin());
        self.sections.iter().fold(Complex::new(self.gain, 0.0), |h, s| h * s.response(z_inv))
    }

    pub fn magnitude(&self, f_hz: f64) -> f64 {
        self.response(f_hz).norm()
    }

    pub fn poles(&self) -> Vec<Complex<f64>> {
        self.sections
            .iter()
            .flat_map(|s| {
                let p = s.poles();
                if s.a[2] == 0.0 {
                    vec![if p[0].norm() >= p[1].norm() { p[0] } else { p[1] }]
                } else {
                    p.to_vec()
                }
            })
            .collect()
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Fresh streaming state over a copy of this filter.
    pub fn stream(&self) -> FilterState {
        FilterState { filter: self.clone(), z: vec![[0.0; 2]; self.sections.len()] }
    }
}

/// Designs a digital Chebyshev Type I low-pass filter as a section cascade.
pub fn design_cheby1(spec: &FilterSpec) -> Result<SosFilter, SigprocError> {
    spec.validate()?;
    let n = spec.order;
    let eps = spec.epsilon();
    let mu = (1.0 / eps).asinh() / n as f64;
    let wc = spec.prewarped_cutoff();
    let k = 2.0 * spec.sample_rate_hz;
    let analog_pole = |i: usize| {
        let theta = PI * (2 * i - 1) as f64 / (2 * n) as f64;
        Complex::new(-mu.sinh() * theta.sin(), mu.cosh() * theta.cos()) * wc
    };
    let bilinear = |s: Complex<f64>| (Complex::new(k, 0.0) + s) / (Complex::new(k, 0.0) - s);

    let mut sections = Vec::with_capacity(n.div_ceil(2));
    for i in 1..=n / 2 {
        let p = bilinear(analog_pole(i));
        let a = [1.0, -2.0 * p.re, p.norm_sqr()];
        let dc = (a[0] + a[1] + a[2]) / 4.0;
        sections.push(Section { b: [dc, 2.0 * dc, dc], a });
    }
    if n % 2 == 1 {
        let p = bilinear(analog_pole(n.div_ceil(2))).re;
        let dc = (1.0 - p) / 2.0;
        sections.push(Section { b: [dc, dc, 0.0], a: [1.0, -p, 0.0] });
    }
    // Odd orders peak at DC; even orders start at the bottom of the ripple.
    let gain = if n % 2 == 1 { 1.0 } else { 1.0 / (1.0 + eps * eps).sqrt() };
    Ok(SosFilter { spec: *spec, gain, sections })
}

/// Causal filtering of a whole series from zero initial state.
pub fn filter_signal(x: &[f64], filter: &SosFilter) -> Vec<f64> {
    let mut state = filter.stream();
    x.iter().map(|&v| state.step(v)).collect()
}

/// Sample-by-sample filter state (transposed direct form II per section).
#[derive(Debug, Clone)]
pub struct FilterState {
    filter: SosFilter,
    z: Vec<[f64; 2]>,
}

impl FilterState {
    pub fn step(&mut self, x: f64) -> f64 {
        let mut v = x * self.filter.gain;
        for (s, z) in self.filter.sections.iter().zip(self.z.iter_mut()) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[1] * y + z[1];
            z[1] = s.b[2] * v - s.a[2] * y;
            v = y;
        }
        v
    }

    pub fn reset(&mut self) {
        self.z.iter_mut().for_each(|z| *z = [0.0; 2]);
    }
}
