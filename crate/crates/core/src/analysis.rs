//! Pearson correlation statistics and correlation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two-sided 95% normal quantile used for interval half-widths.
pub const Z_95: f64 = 1.96;

const BETA_TOL: f64 = 1e-12;
const BETA_MAX_ITER: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 3 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("vectors differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("zero variance in input")]
    ZeroVariance,
    #[error("|r| = 1 leaves no residual variance")]
    DegenerateR,
    #[error("r = {0} is outside [-1, 1]")]
    InvalidR(f64),
    #[error("matrices must be rectangular and equally shaped")]
    ShapeMismatch,
    #[error("non-finite input")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationStats {
    pub r: f64,
    pub r_squared: f64,
    pub p_value: f64,
    pub ci_half_width: f64,
    pub n: usize,
    /// Set when |r| = 1; p is then reported as 0 and the half-width as 0.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

impl CorrelationStats {
    pub fn from_r(r: f64, n: usize) -> Result<Self, AnalysisError> {
        match p_value(r, n) {
            Ok(p) => Ok(Self { r, r_squared: r * r, p_value: p, ci_half_width: ci_half_width(r, n)?, n, degenerate: false }),
            Err(AnalysisError::DegenerateR) => {
                Ok(Self { r, r_squared: r * r, p_value: 0.0, ci_half_width: 0.0, n, degenerate: true })
            }
            Err(e) => Err(e),
        }
    }

    pub fn compute(x: &[f64], y: &[f64]) -> Result<Self, AnalysisError> {
        Self::from_r(pearson_r(x, y)?, x.len())
    }
}

/// Product-moment correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 3 {
        return Err(AnalysisError::TooFewSamples(x.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::ZeroVariance);
    }
    // sqrt of each factor separately keeps pearson_r(x, y) == pearson_r(y, x) bit for bit.
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_r(r: f64, n: usize) -> Result<(), AnalysisError> {
    if n < 3 {
        return Err(AnalysisError::TooFewSamples(n));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(AnalysisError::InvalidR(r));
    }
    if r.abs() == 1.0 {
        return Err(AnalysisError::DegenerateR);
    }
    Ok(())
}

/// t statistic with n − 2 degrees of freedom.
pub fn t_statistic(r: f64, n: usize) -> Result<f64, AnalysisError> {
    check_r(r, n)?;
    Ok(r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt())
}

/// Two-sided p-value of Student's t for the correlation.
pub fn p_value(r: f64, n: usize) -> Result<f64, AnalysisError> {
    let t = t_statistic(r, n)?;
    let df = n as f64 - 2.0;
    Ok(regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0))
}

/// `Z_95 · √((1 − r²)/(n − 2))`.
pub fn ci_half_width(r: f64, n: usize) -> Result<f64, AnalysisError> {
    check_r(r, n)?;
    Ok(Z_95 * ((1.0 - r * r) / (n as f64 - 2.0)).sqrt())
}

/// Lanczos approximation (g = 7, 9 terms) of ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for I_x(a, b) by the modified Lentz method.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=BETA_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < BETA_TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Which axis of a `days × samples` matrix a report correlates along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    /// One row per sample, correlating across days.
    Sample,
    /// One row per day, correlating across samples.
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    #[serde(flatten)]
    pub stats: CorrelationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub dimension: Dimension,
    pub rows: Vec<ReportRow>,
}

fn shape(m: &[Vec<f64>]) -> Result<(usize, usize), AnalysisError> {
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(AnalysisError::ShapeMismatch);
    }
    Ok((m.len(), cols))
}

/// Correlates reference against estimate along `dimension`; matrices are `days × samples`.
pub fn correlation_report(
    reference: &[Vec<f64>],
    estimate: &[Vec<f64>],
    dimension: Dimension,
) -> Result<CorrelationReport, AnalysisError> {
    let (days, samples) = shape(reference)?;
    if shape(estimate)? != (days, samples) {
        return Err(AnalysisError::ShapeMismatch);
    }
    let rows = match dimension {
        Dimension::Sample => (0..samples)
            .map(|j| {
                let x: Vec<f64> = reference.iter().map(|r| r[j]).collect();
                let y: Vec<f64> = estimate.iter().map(|r| r[j]).collect();
                Ok(ReportRow { label: format!("Sample {}", j + 1), stats: CorrelationStats::compute(&x, &y)? })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?,
        Dimension::Time => (0..days)
            .map(|i| {
                Ok(ReportRow {
                    label: format!("Day {}", i + 1),
                    stats: CorrelationStats::compute(&reference[i], &estimate[i])?,
                })
            })
            .collect::<Result<Vec<_>, AnalysisError>>()?,
    };
    Ok(CorrelationReport { dimension, rows })
}

impl CorrelationReport {
    /// Aligned-column text table.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>3}", "", "r", "r2", "p", "CI", "n");
        for row in &self.rows {
            let st = &row.stats;
            let _ = writeln!(
                s,
                "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {:>3}",
                row.label, st.r, st.r_squared, st.p_value, st.ci_half_width, st.n
            );
        }
        s
    }
}
