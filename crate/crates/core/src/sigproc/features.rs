//! Offset correction and per-grid-point spatial features.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::segment::segment_cycles;
use super::SigprocError;

/// Subtracts the mean of the first `baseline_window` samples.
pub fn offset_correct(x: &[f64], baseline_window: usize) -> Result<Vec<f64>, SigprocError> {
    if baseline_window == 0 || baseline_window > x.len() {
        return Err(SigprocError::InvalidWindow { window: baseline_window, len: x.len() });
    }
    let base = mean(&x[..baseline_window]);
    Ok(x.iter().map(|v| v - base).collect())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

/// First derivative with central differences inside and one-sided ends.
pub fn gradient(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| match i {
                0 => (x[1] - x[0]) / dt,
                i if i == n - 1 => (x[n - 1] - x[n - 2]) / dt,
                i => (x[i + 1] - x[i - 1]) / (2.0 * dt),
            })
            .collect(),
    }
}

/// Mean slope over the loading phases of each response.
///
/// A sample is loading when the signal moves away from its starting value,
/// i.e. `x'·(x − x₀) ≥ 0` with `x' ≠ 0`. Responses without loading samples
/// report zero.
pub fn slope_features(responses: &[Vec<f64>], dt: f64) -> Vec<f64> {
    responses
        .iter()
        .map(|x| {
            if x.is_empty() {
                return 0.0;
            }
            let d = gradient(x, dt);
            let (sum, count) = d
                .iter()
                .zip(x)
                .filter(|(g, v)| **g != 0.0 && **g * (**v - x[0]) >= 0.0)
                .fold((0.0, 0usize), |(s, c), (g, _)| (s + g, c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pc1 {
    /// Projection of each centred row onto the leading axis.
    pub scores: Vec<f64>,
    /// Unit leading eigenvector; its first nonzero entry is positive.
    pub loading: Vec<f64>,
    pub explained_variance_ratio: f64,
}

/// First principal component of the rows of `features`.
pub fn pca_pc1(features: &DMatrix<f64>) -> Result<Pc1, SigprocError> {
    let (n, d) = features.shape();
    if n < 2 || d == 0 {
        return Err(SigprocError::TooShort { len: n, min: 2 });
    }
    let means = features.row_mean();
    let mut centred = features.clone();
    for mut row in centred.row_iter_mut() {
        row -= &means;
    }
    let cov = centred.transpose() * &centred / (n as f64 - 1.0);
    let total = cov.trace();
    if !(total > 0.0) {
        return Err(SigprocError::DegenerateCovariance);
    }
    let eig = SymmetricEigen::new(cov);
    let lead = eig.eigenvalues.imax();
    let mut v: DVector<f64> = eig.eigenvectors.column(lead).into_owned();
    v /= v.norm();
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            v = -v;
        }
    }
    let scores = &centred * &v;
    Ok(Pc1 {
        scores: scores.iter().copied().collect(),
        loading: v.iter().copied().collect(),
        explained_variance_ratio: eig.eigenvalues[lead] / total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrConfig {
    /// Bound on |SNR| in dB for noise-free or signal-free points.
    pub cap_db: f64,
    /// Centred moving-average length applied before peak picking.
    pub smoothing: usize,
    /// Peak prominence threshold in units of baseline σ.
    pub prominence_sigmas: f64,
}

impl Default for SnrConfig {
    fn default() -> Self {
        Self { cap_db: 120.0, smoothing: 9, prominence_sigmas: 3.0 }
    }
}

fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let half = len / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            mean(&x[lo..hi])
        })
        .collect()
}

/// Mean peak deflection of `response` relative to the unloaded `baseline`.
pub fn mean_peak_deflection(baseline: &[f64], response: &[f64], config: &SnrConfig) -> f64 {
    if response.is_empty() || baseline.is_empty() {
        return 0.0;
    }
    let base = mean(baseline);
    let sigma = std_dev(baseline);
    let mut defl = moving_average(&response.iter().map(|v| v - base).collect::<Vec<_>>(), config.smoothing.max(1));
    let max = defl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = defl.iter().cloned().fold(f64::INFINITY, f64::min);
    if -min > max {
        defl.iter_mut().for_each(|v| *v = -*v);
    }
    match segment_cycles(&defl, config.prominence_sigmas * sigma) {
        Ok(seg) => mean(&seg.peaks.iter().map(|p| p.value).collect::<Vec<_>>()).abs(),
        Err(_) => max.abs().max(min.abs()),
    }
}

/// Per-point SNR in dB, clamped to `±cap_db`.
pub fn snr_map(baselines: &[Vec<f64>], responses: &[Vec<f64>], config: &SnrConfig) -> Result<Vec<f64>, SigprocError> {
    if baselines.len() != responses.len() {
        return Err(SigprocError::LengthMismatch { left: baselines.len(), right: responses.len() });
    }
    Ok(baselines
        .iter()
        .zip(responses)
        .map(|(b, r)| {
            let signal = mean_peak_deflection(b, r, config);
            let sigma = if b.is_empty() { 0.0 } else { std_dev(b) };
            let db = if signal == 0.0 {
                f64::NEG_INFINITY
            } else if sigma == 0.0 {
                f64::INFINITY
            } else {
                20.0 * (signal / sigma).log10()
            };
            db.clamp(-config.cap_db, config.cap_db)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    #[test]
    fn offset_correction() {
        assert!(offset_correct(&[4.0; 10], 3).unwrap().iter().all(|&v| v == 0.0));
        let mut step = vec![0.0; 50];
        step.extend(vec![2.5; 50]);
        let c = offset_correct(&step, 50).unwrap();
        assert_eq!(c[99] - c[0], 2.5);
        assert!(offset_correct(&step, 0).is_err());
        assert!(offset_correct(&step, 101).is_err());
    }

    #[test]
    fn slopes() {
        let dt = 0.01;
        let ramp: Vec<f64> = (0..100).map(|i| -3.0 * i as f64 * dt).collect();
        assert!((slope_features(&[ramp], dt)[0] + 3.0).abs() < 1e-9);
        assert_eq!(slope_features(&[vec![2.0; 10]], dt), vec![0.0]);
        // t² on [0, 1]: the mean derivative is 1.
        let n = 1000;
        let h = 1.0 / n as f64;
        let quad: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(2)).collect();
        assert!((slope_features(&[quad], h)[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pca_on_a_line() {
        let dir = [0.6, 0.8];
        let ts = [-2.0, -0.5, 0.0, 1.0, 1.5];
        let m = DMatrix::from_fn(5, 2, |i, j| 3.0 + ts[i] * dir[j]);
        let pc = pca_pc1(&m).unwrap();
        assert!((pc.explained_variance_ratio - 1.0).abs() < 1e-12);
        let tmean = ts.iter().sum::<f64>() / 5.0;
        for (s, t) in pc.scores.iter().zip(ts) {
            assert!((s - (t - tmean)).abs() < 1e-12);
        }
    }

    #[test]
    fn pca_symmetric_pair() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let pc = pca_pc1(&m).unwrap();
        assert!((pc.scores[0] + pc.scores[1]).abs() < 1e-12);
        assert!(pc.scores[0].abs() > 1.0);
    }

    #[test]
    fn pca_degenerate() {
        let m = DMatrix::from_element(4, 3, 2.0);
        assert!(matches!(pca_pc1(&m), Err(SigprocError::DegenerateCovariance)));
    }

    /// Leading eigenpair of a symmetric 3×3 matrix via the characteristic cubic.
    fn cubic_leading_eigen(c: &DMatrix<f64>) -> (f64, [f64; 3]) {
        let p1 = c[(0, 1)].powi(2) + c[(0, 2)].powi(2) + c[(1, 2)].powi(2);
        let q = c.trace() / 3.0;
        let p2 = (c[(0, 0)] - q).powi(2) + (c[(1, 1)] - q).powi(2) + (c[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (c - DMatrix::identity(3, 3) * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let lambda = q + 2.0 * p * phi.cos();
        // Eigenvector: cross product of two rows of (C − λI).
        let a = c - DMatrix::identity(3, 3) * lambda;
        let r0 = [a[(0, 0)], a[(0, 1)], a[(0, 2)]];
        let r1 = [a[(1, 0)], a[(1, 1)], a[(1, 2)]];
        let v = [r0[1] * r1[2] - r0[2] * r1[1], r0[2] * r1[0] - r0[0] * r1[2], r0[0] * r1[1] - r0[1] * r1[0]];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        (lambda, [v[0] / n, v[1] / n, v[2] / n])
    }

    #[test]
    fn pca_matches_characteristic_polynomial_oracle() {
        let mut rng = rng_from_seed(5);
        for _ in 0..10 {
            let m = DMatrix::from_fn(10, 3, |_, j| rng.random_range(-1.0..1.0) * (j + 1) as f64);
            let pc = pca_pc1(&m).unwrap();
            let mut centred = m.clone();
            for j in 0..3 {
                let mu = m.column(j).mean();
                centred.column_mut(j).add_scalar_mut(-mu);
            }
            let cov = centred.transpose() * &centred / 9.0;
            let (_, mut v) = cubic_leading_eigen(&cov);
            if v[0] < 0.0 {
                v = [-v[0], -v[1], -v[2]];
            }
            for i in 0..10 {
                let s: f64 = (0..3).map(|j| centred[(i, j)] * v[j]).sum();
                assert!((s - pc.scores[i]).abs() < 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn pc1_dominates_random_directions(seed in 0u64..1000) {
            let mut rng = rng_from_seed(seed);
            let m = DMatrix::from_fn(12, 3, |_, j| rng.random_range(-1.0..1.0) * (3 - j) as f64);
            let pc = pca_pc1(&m).unwrap();
            let norm: f64 = pc.loading.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
            let var = |dir: &[f64]| {
                let proj: Vec<f64> = m.row_iter().map(|r| (0..3).map(|j| r[j] * dir[j]).sum()).collect();
                let mu = proj.iter().sum::<f64>() / 12.0;
                proj.iter().map(|p| (p - mu).powi(2)).sum::<f64>() / 11.0
            };
            let best = var(&pc.loading);
            for _ in 0..100 {
                let mut d: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                d.iter_mut().for_each(|v| *v /= n);
                prop_assert!(var(&d) <= best + 1e-12);
            }
        }

        #[test]
        fn offset_is_shift_invariant(xs in proptest::collection::vec(-10.0f64..10.0, 5..50), c in -100.0f64..100.0) {
            let a = offset_correct(&xs, 3).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|v| v + c).collect();
            let b = offset_correct(&shifted, 3).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!(mean(&a[..3]).abs() < 1e-12);
        }
    }

    #[test]
    fn snr_ten_sigma_is_twenty_db() {
        let sigma = 0.01;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = rng_from_seed(21);
        let baseline: Vec<f64> = (0..2000).map(|_| noise.sample(&mut rng)).collect();
        let response: Vec<f64> = (0..1600)
            .map(|k| 10.0 * sigma * 0.5 * (1.0 - (2.0 * PI * k as f64 / 100.0).cos()) + noise.sample(&mut rng))
            .collect();
        let db = snr_map(&[baseline], &[response], &SnrConfig::default()).unwrap()[0];
        assert!((db - 20.0).abs() < 0.5, "{db}");
    }

    #[test]
    fn snr_guards() {
        let cfg = SnrConfig::default();
        let quiet = vec![0.0; 100];
        let pulse: Vec<f64> = (0..100).map(|k| (PI * k as f64 / 99.0).sin()).collect();
        assert_eq!(snr_map(&[quiet.clone()], &[pulse], &cfg).unwrap(), vec![120.0]);
        let noisy: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 0.01 } else { -0.01 }).collect();
        assert_eq!(snr_map(&[noisy], &[vec![0.0; 100]], &cfg).unwrap(), vec![-120.0]);
    }
}
