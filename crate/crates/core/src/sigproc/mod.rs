//! Signal processing for flux, force and pressure streams.

mod features;
mod filter;
mod segment;
mod step;

pub use features::{
    gradient, mean, mean_peak_deflection, offset_correct, pca_pc1, slope_features, snr_map, std_dev, Pc1, SnrConfig,
};
pub use filter::{design_cheby1, filter_signal, FilterSpec, FilterState, Section, SosFilter};
pub use segment::{find_peaks, local_maxima, prominence, segment_cycles, CycleSegmentation, Extremum};
pub use step::{step_metrics, StepMetrics, SETTLING_BAND};

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SigprocError {
    #[error("invalid filter spec: {0}")]
    InvalidSpec(String),
    #[error("series of length {len} is shorter than {min}")]
    TooShort { len: usize, min: usize },
    #[error("series contains non-finite values")]
    NonFinite,
    #[error("no qualifying cycles")]
    NoCycles,
    #[error("window {window} invalid for series of length {len}")]
    InvalidWindow { window: usize, len: usize },
    #[error("rows are identical, covariance is degenerate")]
    DegenerateCovariance,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("signal has no step")]
    NoStep,
    #[error("signal does not settle")]
    NotSettled,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Writes a square grid of per-point values as `row,col,value` rows (row-major input).
pub fn write_grid_map<W: Write>(writer: W, side: usize, values: &[f64]) -> Result<(), SigprocError> {
    if values.len() != side * side {
        return Err(SigprocError::LengthMismatch { left: values.len(), right: side * side });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["row", "col", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([(i / side).to_string(), (i % side).to_string(), v.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_map_csv() {
        let mut buf = Vec::new();
        write_grid_map(&mut buf, 2, &[1.0, 2.5, -3.0, 0.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "row,col,value\n0,0,1\n0,1,2.5\n1,0,-3\n1,1,0\n");
        assert!(write_grid_map(Vec::new(), 3, &[0.0]).is_err());
    }
}
