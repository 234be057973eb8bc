//! Prominence-based peak/trough detection and cycle segmentation.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::SigprocError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSegmentation {
    pub peaks: Vec<Extremum>,
    pub troughs: Vec<Extremum>,
    /// Sample spans, one per peak.
    pub cycles: Vec<RangeInclusive<usize>>,
}

/// Local maxima of `x`; plateaus report their middle sample.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = x.len();
    let mut i = 1;
    while i + 1 < n {
        if x[i - 1] < x[i] {
            let mut ahead = i + 1;
            while ahead + 1 < n && x[ahead] == x[i] {
                ahead += 1;
            }
            if x[ahead] < x[i] {
                out.push((i + ahead - 1) / 2);
                i = ahead;
            }
        }
        i += 1;
    }
    out
}

/// Topographic prominence of a local maximum.
pub fn prominence(x: &[f64], peak: usize) -> f64 {
    let h = x[peak];
    let mut left_min = h;
    for &v in x[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Local maxima whose prominence is at least `min_prominence`.
pub fn find_peaks(x: &[f64], min_prominence: f64) -> Vec<usize> {
    local_maxima(x).into_iter().filter(|&i| prominence(x, i) >= min_prominence).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Peak,
    Trough,
}

/// Finds alternating peaks and troughs and splits the series into cycles.
///
/// Adjacent extrema of the same kind keep the more extreme one. A final
/// descent after the last peak that drops by at least `min_prominence`
/// contributes a closing trough at its minimum, so a series that ends on the
/// way down still closes its last cycle.
pub fn segment_cycles(x: &[f64], min_prominence: f64) -> Result<CycleSegmentation, SigprocError> {
    if x.len() < 3 {
        return Err(SigprocError::TooShort { len: x.len(), min: 3 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SigprocError::NonFinite);
    }
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    let mut ext: Vec<(usize, Kind)> = find_peaks(x, min_prominence)
        .into_iter()
        .map(|i| (i, Kind::Peak))
        .chain(find_peaks(&neg, min_prominence).into_iter().map(|i| (i, Kind::Trough)))
        .collect();
    ext.sort_by_key(|e| e.0);

    let mut alt: Vec<(usize, Kind)> = Vec::with_capacity(ext.len());
    for e in ext {
        match alt.last_mut() {
            Some(last) if last.1 == e.1 => {
                let better = match e.1 {
                    Kind::Peak => x[e.0] > x[last.0],
                    Kind::Trough => x[e.0] < x[last.0],
                };
                if better {
                    *last = e;
                }
            }
            _ => alt.push(e),
        }
    }

    if let Some(&(last_peak, Kind::Peak)) = alt.last() {
        let (offset, min) = x[last_peak..]
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        if x[last_peak] - min >= min_prominence && offset > 0 {
            alt.push((last_peak + offset, Kind::Trough));
        }
    }

    let peaks: Vec<Extremum> =
        alt.iter().filter(|e| e.1 == Kind::Peak).map(|&(index, _)| Extremum { index, value: x[index] }).collect();
    if peaks.is_empty() {
        return Err(SigprocError::NoCycles);
    }
    let troughs: Vec<Extremum> =
        alt.iter().filter(|e| e.1 == Kind::Trough).map(|&(index, _)| Extremum { index, value: x[index] }).collect();

    let cycles = peaks
        .iter()
        .map(|p| {
            let start = troughs.iter().rev().find(|t| t.index < p.index).map_or(0, |t| t.index + 1);
            let end = troughs.iter().find(|t| t.index > p.index).map_or(x.len() - 1, |t| t.index);
            start..=end
        })
        .collect();
    Ok(CycleSegmentation { peaks, troughs, cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn sine(periods: usize, per: usize) -> Vec<f64> {
        (0..periods * per).map(|k| (2.0 * PI * k as f64 / per as f64).sin()).collect()
    }

    #[test]
    fn sine_has_sixteen_cycles() {
        let s = segment_cycles(&sine(16, 50), 0.5).unwrap();
        assert_eq!((s.peaks.len(), s.troughs.len()), (16, 16));
        assert_eq!(s.cycles.len(), 16);
    }

    #[test]
    fn raised_cosine_presses_between_flat_lead_and_tail() {
        let mut x = vec![0.0; 50];
        x.extend((0..16 * 100).map(|k| 1.0 - (2.0 * PI * (k % 100) as f64 / 100.0).cos()));
        x.extend(vec![0.0; 50]);
        let s = segment_cycles(&x, 0.3).unwrap();
        assert_eq!((s.peaks.len(), s.troughs.len()), (16, 16));
        for (c, p) in s.cycles.iter().zip(&s.peaks) {
            assert!(c.contains(&p.index));
        }
    }

    #[test]
    fn noisy_sine_keeps_count() {
        let noise = Normal::new(0.0, 0.02).unwrap();
        let mut rng = rng_from_seed(11);
        let x: Vec<f64> = sine(16, 50).into_iter().map(|v| v + noise.sample(&mut rng)).collect();
        let s = segment_cycles(&x, 0.5).unwrap();
        assert_eq!((s.peaks.len(), s.troughs.len()), (16, 16));
    }

    #[test]
    fn ramp_has_no_cycles() {
        let x: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert!(matches!(segment_cycles(&x, 0.1), Err(SigprocError::NoCycles)));
        assert!(matches!(segment_cycles(&[1.0, 2.0], 0.1), Err(SigprocError::TooShort { .. })));
    }

    #[test]
    fn plateau_peak_reports_middle() {
        assert_eq!(local_maxima(&[0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0]), vec![3]);
        assert_eq!(local_maxima(&[0.0, 2.0, 2.0]), Vec::<usize>::new());
    }

    #[test]
    fn prominence_matches_hand_values() {
        let x = [0.0, 3.0, 1.0, 5.0, 2.0, 4.0, 0.0];
        assert_eq!(prominence(&x, 1), 2.0);
        assert_eq!(prominence(&x, 3), 5.0);
        assert_eq!(prominence(&x, 5), 2.0);
    }

    #[test]
    fn shallow_dip_does_not_split_a_peak() {
        // Two peaks with a shallow dip that is below the prominence threshold.
        let x = [0.0, 5.0, 4.8, 6.0, 0.0, 5.0, 0.0];
        let s = segment_cycles(&x, 1.0).unwrap();
        let idx: Vec<usize> = s.peaks.iter().map(|p| p.index).collect();
        assert_eq!(idx, vec![3, 5]);
        assert_eq!(s.troughs.len(), 2);
    }

    proptest! {
        #[test]
        fn segmenting_one_cycle_is_idempotent(periods in 2usize..10, per in 20usize..80, amp in 0.5f64..5.0) {
            let x: Vec<f64> = sine(periods, per).into_iter().map(|v| amp * v).collect();
            let s = segment_cycles(&x, 0.2 * amp).unwrap();
            for c in &s.cycles {
                let span = &x[c.clone()];
                let again = segment_cycles(span, 0.2 * amp).unwrap();
                prop_assert_eq!(again.peaks.len(), 1);
                prop_assert_eq!(again.troughs.len(), 1);
            }
        }

        #[test]
        fn extrema_alternate(xs in proptest::collection::vec(-5.0f64..5.0, 3..200), thr in 0.0f64..3.0) {
            if let Ok(s) = segment_cycles(&xs, thr) {
                let mut all: Vec<(usize, bool)> = s.peaks.iter().map(|p| (p.index, true))
                    .chain(s.troughs.iter().map(|t| (t.index, false))).collect();
                all.sort();
                for w in all.windows(2) {
                    prop_assert_ne!(w[0].1, w[1].1);
                }
                for (c, p) in s.cycles.iter().zip(&s.peaks) {
                    prop_assert_eq!(s.peaks.iter().filter(|q| c.contains(&q.index)).count(), 1);
                    prop_assert!(c.contains(&p.index));
                }
            }
        }
    }
}
