//! Uniformly sampled time series of pressure, flux, force and contact labels.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Columns of the record CSV format, in order.
pub const CSV_HEADER: [&str; 9] = ["t", "pressure_kpa", "bx", "by", "bz", "fx", "fy", "fz", "label"];

const SPACING_TOLERANCE_S: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("sample rate must be positive and finite, got {0}")]
    InvalidSampleRate(f64),
    #[error("frame {index}: timestamp {t} breaks uniform spacing")]
    NonUniform { index: usize, t: f64 },
    #[error("frame {index}: non-finite value")]
    NonFinite { index: usize },
    #[error("extra column has {got} values for {expected} frames")]
    ExtraLength { expected: usize, got: usize },
    #[error("malformed csv: {0}")]
    Format(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One sampled instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    /// Measured pressure, kPa.
    pub pressure: f64,
    /// Gauss
    pub flux: Vector3<f64>,
    /// (shear x, shear y, normal), N
    pub force: Vector3<f64>,
    /// Contact position class while in contact.
    pub label: Option<usize>,
}

impl Frame {
    /// Magnitude of the tangential force.
    pub fn shear_force(&self) -> f64 {
        self.force.x.hypot(self.force.y)
    }

    pub fn normal_force(&self) -> f64 {
        self.force.z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    sample_rate: f64,
    frames: Vec<Frame>,
}

impl TimeSeriesRecord {
    pub fn new(sample_rate: f64) -> Result<Self, RecordError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(RecordError::InvalidSampleRate(sample_rate));
        }
        Ok(Self { sample_rate, frames: Vec::new() })
    }

    pub fn from_frames(sample_rate: f64, frames: Vec<Frame>) -> Result<Self, RecordError> {
        let mut r = Self::new(sample_rate)?;
        r.frames.reserve(frames.len());
        for f in frames {
            r.push(f)?;
        }
        Ok(r)
    }

    /// Appends a frame, checking spacing against the previous one.
    pub fn push(&mut self, frame: Frame) -> Result<(), RecordError> {
        let index = self.frames.len();
        let finite = frame.t.is_finite()
            && frame.pressure.is_finite()
            && frame.flux.iter().all(|v| v.is_finite())
            && frame.force.iter().all(|v| v.is_finite());
        if !finite {
            return Err(RecordError::NonFinite { index });
        }
        if let Some(prev) = self.frames.last() {
            if ((frame.t - prev.t) - self.dt()).abs() > SPACING_TOLERANCE_S {
                return Err(RecordError::NonUniform { index, t: frame.t });
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn pressures(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.pressure).collect()
    }

    pub fn flux(&self) -> Vec<Vector3<f64>> {
        self.frames.iter().map(|f| f.flux).collect()
    }

    /// One flux axis (0 = x, 1 = y, 2 = z).
    pub fn flux_axis(&self, axis: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.flux[axis]).collect()
    }

    pub fn normal_forces(&self) -> Vec<f64> {
        self.frames.iter().map(Frame::normal_force).collect()
    }

    pub fn shear_forces(&self) -> Vec<f64> {
        self.frames.iter().map(Frame::shear_force).collect()
    }

    /// Writes the CSV form, optionally with one extra integer column.
    pub fn write_csv<W: Write>(&self, writer: W, extra: Option<(&str, &[i64])>) -> Result<(), RecordError> {
        if let Some((_, values)) = extra {
            if values.len() != self.frames.len() {
                return Err(RecordError::ExtraLength { expected: self.frames.len(), got: values.len() });
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = CSV_HEADER.to_vec();
        if let Some((name, _)) = extra {
            header.push(name);
        }
        w.write_record(&header)?;
        for (i, f) in self.frames.iter().enumerate() {
            let mut row = vec![
                f.t.to_string(),
                f.pressure.to_string(),
                f.flux.x.to_string(),
                f.flux.y.to_string(),
                f.flux.z.to_string(),
                f.force.x.to_string(),
                f.force.y.to_string(),
                f.force.z.to_string(),
                f.label.map(|l| l.to_string()).unwrap_or_default(),
            ];
            if let Some((_, values)) = extra {
                row.push(values[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV form. Any column after `label` is returned as the extra column.
    pub fn read_csv<R: Read>(reader: R) -> Result<(Self, Option<(String, Vec<i64>)>), RecordError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.len() < CSV_HEADER.len() || names[..CSV_HEADER.len()] != CSV_HEADER {
            return Err(RecordError::Format(format!("unexpected header {names:?}")));
        }
        let extra_name = match names.len() - CSV_HEADER.len() {
            0 => None,
            1 => Some(names[CSV_HEADER.len()].to_string()),
            _ => return Err(RecordError::Format("at most one extra column is supported".into())),
        };
        let mut rows: Vec<Frame> = Vec::new();
        let mut extra = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize| -> Result<f64, RecordError> {
                rec[j].parse::<f64>().map_err(|e| RecordError::Format(format!("row {i}, column {}: {e}", names[j])))
            };
            let label = match &rec[8] {
                "" => None,
                s => Some(s.parse::<usize>().map_err(|e| RecordError::Format(format!("row {i}, label: {e}")))?),
            };
            rows.push(Frame {
                t: num(0)?,
                pressure: num(1)?,
                flux: Vector3::new(num(2)?, num(3)?, num(4)?),
                force: Vector3::new(num(5)?, num(6)?, num(7)?),
                label,
            });
            if extra_name.is_some() {
                extra.push(rec[9].parse::<i64>().map_err(|e| RecordError::Format(format!("row {i}, extra: {e}")))?);
            }
        }
        let sample_rate = match rows.as_slice() {
            [a, b, ..] => 1.0 / (b.t - a.t),
            _ => return Err(RecordError::Format("need at least two frames to infer the sample rate".into())),
        };
        // Snap to the nearest integer rate; timestamps are written with full precision.
        let sample_rate = if (sample_rate - sample_rate.round()).abs() < 1e-6 { sample_rate.round() } else { sample_rate };
        let record = Self::from_frames(sample_rate, rows)?;
        Ok((record, extra_name.map(|n| (n, extra))))
    }

    pub fn write_csv_file(&self, path: &Path, extra: Option<(&str, &[i64])>) -> Result<(), RecordError> {
        self.write_csv(File::create(path)?, extra)
    }

    pub fn read_csv_file(path: &Path) -> Result<(Self, Option<(String, Vec<i64>)>), RecordError> {
        Self::read_csv(File::open(path)?)
    }
}
