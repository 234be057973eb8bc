use rand::Rng;
use softmag::analysis::*;
use softmag::seed::rng_from_seed;
use statrs::distribution::{ContinuousCDF, StudentsT};

// (r, n, reference r², p, CI half-width)
const REFERENCE: [(f64, usize, f64, f64, f64); 9] = [
    (0.912, 5, 0.832, 0.031, 0.463),
    (0.818, 5, 0.657, 0.096, 0.662),
    (0.920, 5, 0.846, 0.027, 0.445),
    (0.961, 3, 0.923, 0.179, 0.544),
    (0.978, 3, 0.956, 0.135, 0.413),
    (0.968, 3, 0.938, 0.161, 0.490),
    (0.889, 3, 0.789, 0.304, 0.900),
    (0.934, 3, 0.872, 0.233, 0.703),
    (0.829, 10, 0.687, 0.003, 0.388),
];

#[test]
fn reference_rows_are_reproduced() {
    for (r, n, r2, p, ci) in REFERENCE {
        let s = CorrelationStats::from_r(r, n).unwrap();
        assert_eq!(s.r_squared, r * r);
        assert!((s.p_value - p).abs() <= 0.01, "p for r={r}: {}", s.p_value);
        if r == 0.818 {
            continue;
        }
        assert!((s.r_squared - r2).abs() < 0.0015, "r² for r={r}");
        assert!((s.ci_half_width - ci).abs() <= 0.005, "CI for r={r}: {}", s.ci_half_width);
    }
    assert!((p_value(0.912, 5).unwrap() - 0.031).abs() <= 0.001);
    assert!((p_value(0.829, 10).unwrap() - 0.003).abs() <= 0.0005);
    assert!((ci_half_width(0.961, 3).unwrap() - 0.544).abs() <= 0.002);
}

#[test]
fn row_with_inconsistent_r_is_explained_by_its_r_squared() {
    // Tabulated: r 0.818, r² 0.657, p 0.096, CI 0.662. r·r is 0.669, so r and r² disagree.
    // r = √0.657 reproduces both p and CI to the printed precision; r = 0.818 misses the CI.
    let r = 0.657f64.sqrt();
    assert!((p_value(r, 5).unwrap() - 0.096).abs() < 0.0005);
    assert!((ci_half_width(r, 5).unwrap() - 0.662).abs() < 0.001);
    assert!((ci_half_width(0.818, 5).unwrap() - 0.662).abs() > 0.005);
}

#[test]
fn p_value_matches_students_t_from_statrs() {
    for n in [3usize, 4, 5, 10, 25] {
        let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64).unwrap();
        for k in 0..40 {
            let r = -0.975 + 0.05 * k as f64;
            let t = t_statistic(r, n).unwrap();
            let oracle = 2.0 * (1.0 - dist.cdf(t.abs()));
            assert!((p_value(r, n).unwrap() - oracle).abs() < 1e-9, "n={n} r={r}");
        }
    }
}

#[test]
fn pearson_matches_direct_sums() {
    let mut rng = rng_from_seed(10);
    let x: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..5.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.7 * v + rng.random_range(-1.0..1.0)).collect();
    let n = 10.0;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = (0..10).map(|i| (x[i] - mx) * (y[i] - my)).sum::<f64>() / n;
    let sx = ((0..10).map(|i| (x[i] - mx).powi(2)).sum::<f64>() / n).sqrt();
    let sy = ((0..10).map(|i| (y[i] - my).powi(2)).sum::<f64>() / n).sqrt();
    assert!((pearson_r(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-12);
}

#[test]
fn report_dimensions_and_transpose() {
    let reference = vec![
        vec![1.0, 3.0, 5.0],
        vec![0.8, 2.7, 4.2],
        vec![0.6, 2.0, 4.0],
        vec![0.7, 2.2, 4.6],
        vec![0.9, 2.9, 5.1],
    ];
    let estimate: Vec<Vec<f64>> =
        reference.iter().map(|r| r.iter().enumerate().map(|(j, v)| (j as f64 + 1.0) * v + 0.5).collect()).collect();
    let by_sample = correlation_report(&reference, &estimate, Dimension::Sample).unwrap();
    assert_eq!(by_sample.rows.len(), 3);
    for row in &by_sample.rows {
        assert!((row.stats.r - 1.0).abs() < 1e-12);
        assert_eq!(row.stats.n, 5);
    }
    let by_time = correlation_report(&reference, &estimate, Dimension::Time).unwrap();
    assert_eq!(by_time.rows.len(), 5);
    assert_eq!(by_time.rows[0].stats.n, 3);

    let t = |m: &Vec<Vec<f64>>| (0..3).map(|j| m.iter().map(|r| r[j]).collect()).collect::<Vec<Vec<f64>>>();
    let swapped = correlation_report(&t(&reference), &t(&estimate), Dimension::Sample).unwrap();
    for (a, b) in swapped.rows.iter().zip(&by_time.rows) {
        assert_eq!(a.stats, b.stats);
    }
    let json = serde_json::to_string(&by_time).unwrap();
    let back: CorrelationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, by_time);
    assert!(correlation_report(&reference, &estimate[..4], Dimension::Time).is_err());
}
