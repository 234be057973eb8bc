use serde::{Deserialize, Serialize};

use super::NeuralError;

/// Per-feature min-max scaling onto `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl Scaler {
    /// Fits to rows of width `width`. Constant features get a unit range.
    pub fn fit<'a, I>(rows: I, width: usize, lo: f64, hi: f64) -> Result<Self, NeuralError>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if !(hi > lo) {
            return Err(NeuralError::InvalidSpec("scaler interval must have hi > lo".into()));
        }
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        let mut any = false;
        for r in rows {
            if r.len() != width {
                return Err(NeuralError::ShapeMismatch { expected: width, got: r.len() });
            }
            any = true;
            for (j, v) in r.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        if !any {
            return Err(NeuralError::EmptyDataset);
        }
        for j in 0..width {
            if max[j] <= min[j] {
                max[j] = min[j] + 1.0;
            }
        }
        Ok(Self { min, max, lo, hi })
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| self.lo + (v - self.min[j]) / (self.max[j] - self.min[j]) * (self.hi - self.lo))
            .collect()
    }

    /// Transform with inputs clamped to the fitted range; the flag reports whether any clamping happened.
    pub fn transform_clamped(&self, x: &[f64]) -> (Vec<f64>, bool) {
        let mut clamped = false;
        let inside: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let c = v.clamp(self.min[j], self.max[j]);
                clamped |= c != v;
                c
            })
            .collect();
        (self.transform(&inside), clamped)
    }

    pub fn inverse_transform(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| self.min[j] + (v - self.lo) / (self.hi - self.lo) * (self.max[j] - self.min[j]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn endpoints_map_exactly() {
        let rows = [vec![1.0, -5.0], vec![3.0, 5.0], vec![2.0, 0.0]];
        let s = Scaler::fit(rows.iter().map(|r| r.as_slice()), 2, -1.0, 1.0).unwrap();
        assert_eq!(s.transform(&[1.0, -5.0]), vec![-1.0, -1.0]);
        assert_eq!(s.transform(&[3.0, 5.0]), vec![1.0, 1.0]);
        let (y, flag) = s.transform_clamped(&[10.0, 0.0]);
        assert!(flag);
        assert_eq!(y[0], 1.0);
        assert!(!s.transform_clamped(&[2.0, 0.0]).1);
    }

    #[test]
    fn constant_feature_gets_unit_range() {
        let rows = [vec![4.0], vec![4.0]];
        let s = Scaler::fit(rows.iter().map(|r| r.as_slice()), 1, 0.0, 1.0).unwrap();
        assert_eq!(s.max, vec![5.0]);
        assert_eq!(s.transform(&[4.0]), vec![0.0]);
    }

    proptest! {
        #[test]
        fn round_trip(a in -100.0f64..100.0, span in 0.1f64..50.0, t in 0.0f64..1.0) {
            let rows = [vec![a], vec![a + span]];
            let s = Scaler::fit(rows.iter().map(|r| r.as_slice()), 1, 0.0, 1.0).unwrap();
            let x = a + t * span;
            let back = s.inverse_transform(&s.transform(&[x]))[0];
            prop_assert!((back - x).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }
}
