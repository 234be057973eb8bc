//! The acceptance suite: each check returns a pass/fail line with a deterministic detail string.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::pipeline::{
    build_models, calibrate_gripper, decouple_eval_records, evaluate_decoupling, gripper, object_comparison,
    progressive_report, DecoupleEvalRow, ObjectComparison, ProgressiveReport, RAMP_LIMIT_N, STEP_LIMIT_N,
};
use super::HarnessError;
use crate::actuator::{simulate_blocked_actuation, simulate_free_actuation, ActuatorParams, ObjectModel, PressureProfile};
use crate::analysis::CorrelationStats;
use crate::config::ProjectConfig;
use crate::decoupler::decoupler_architecture;
use crate::magnetics::{dipole_field, ferrite_disturbance, MagnetPose};
use crate::neural::{
    finite_diff_check, Activation, Architecture, BranchInput, BranchSpec, LayerSpec, Network, OutputKind, Sample,
    Target,
};
use crate::par::Execution;
use crate::seed::{rng_from_seed, SeedTree};
use crate::sigproc::{design_cheby1, step_metrics, FilterSpec};
use crate::tactile::{build_multitask, TactileMetrics};
use crate::Vector3;

/// Reference correlation rows: `(label, r, n, p, CI half-width)`.
pub const REFERENCE_ROWS: [(&str, f64, usize, f64, f64); 9] = [
    ("Sample 1", 0.912, 5, 0.031, 0.463),
    ("Sample 2", 0.818, 5, 0.096, 0.662),
    ("Sample 3", 0.920, 5, 0.027, 0.445),
    ("Day 1", 0.961, 3, 0.179, 0.544),
    ("Day 2", 0.978, 3, 0.135, 0.413),
    ("Day 3", 0.968, 3, 0.161, 0.490),
    ("Day 4", 0.889, 3, 0.304, 0.900),
    ("Day 5", 0.934, 3, 0.233, 0.703),
    ("Individual", 0.829, 10, 0.003, 0.388),
];

const P_TOL: f64 = 0.01;
const CI_TOL: f64 = 0.005;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    fn new(id: u8, name: &str, passed: bool, detail: String) -> Self {
        Self { id, name: name.to_string(), passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} criterion {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub config_hash: String,
    pub results: Vec<CriterionResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {} config {}", self.seed, self.config_hash);
        for r in &self.results {
            let _ = writeln!(s, "{}", r.line());
        }
        let failed = self.results.iter().filter(|r| !r.passed).count();
        let _ = writeln!(s, "{} of {} criteria passed", self.results.len() - failed, self.results.len());
        s
    }
}

/// Knobs for running the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteOptions {
    pub exec: Execution,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { exec: Execution::default() }
    }
}

/// Recomputes p and CI for every reference row.
pub fn check_statistics() -> CriterionResult {
    let started = Instant::now();
    let mut misses = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    for (label, r, n, p, ci) in REFERENCE_ROWS {
        match CorrelationStats::from_r(r, n) {
            Ok(s) => {
                let (dp, dc) = ((s.p_value - p).abs(), (s.ci_half_width - ci).abs());
                worst = (worst.0.max(dp), worst.1.max(dc));
                if dp > P_TOL || dc > CI_TOL {
                    misses.push(format!("{label} (p {:.4} vs {p}, CI {:.4} vs {ci})", s.p_value, s.ci_half_width));
                }
            }
            Err(e) => misses.push(format!("{label}: {e}")),
        }
    }
    let fast = started.elapsed().as_secs_f64() < 1.0;
    let mut detail = format!("max |dp| {:.4}, max |dCI| {:.4} over {} rows", worst.0, worst.1, REFERENCE_ROWS.len());
    if !misses.is_empty() {
        let _ = write!(detail, "; out of tolerance: {}", misses.join(", "));
    }
    if !fast {
        detail.push_str("; over the 1 s budget");
    }
    CriterionResult::new(1, "statistics", misses.is_empty() && fast, detail)
}

/// `within_budget` covers decoupler training plus the ramp evaluation.
pub fn check_decoupling_ramp(row: &DecoupleEvalRow, within_budget: bool) -> CriterionResult {
    let d = &row.decoupled;
    let ok = d.frames > 0 && d.fraction_below_ramp_limit >= 0.95;
    let mut detail = format!(
        "{:.1}% of {} frames below {RAMP_LIMIT_N} N (max {:.3} N; raw {:.1}%, max {:.3} N)",
        100.0 * d.fraction_below_ramp_limit,
        d.frames,
        d.max_abs_normal_n,
        100.0 * row.raw.fraction_below_ramp_limit,
        row.raw.max_abs_normal_n
    );
    if !within_budget {
        detail.push_str("; over the 120 s budget");
    }
    CriterionResult::new(2, "decoupling ramp", ok && within_budget, detail)
}

pub fn check_decoupling_step(row: &DecoupleEvalRow) -> CriterionResult {
    let d = &row.decoupled;
    let ok = d.steady_frames > 0 && d.steady_max_abs_normal_n < STEP_LIMIT_N;
    let detail = format!(
        "steady-state max {:.3} N over {} frames, limit {STEP_LIMIT_N} N (raw {:.3} N)",
        d.steady_max_abs_normal_n, d.steady_frames, row.raw.steady_max_abs_normal_n
    );
    CriterionResult::new(3, "decoupling step", ok, detail)
}

pub fn check_training(metrics: &TactileMetrics, within_budget: bool) -> CriterionResult {
    let ok = metrics.position_accuracy >= 0.90 && metrics.shear_mae <= 0.15 && metrics.normal_mae <= 0.15;
    let mut detail = format!(
        "accuracy {:.4} on {} windows, scaled MAE shear {:.4} normal {:.4}",
        metrics.position_accuracy, metrics.classified_windows, metrics.shear_mae, metrics.normal_mae
    );
    if !within_budget {
        detail.push_str("; over the 600 s budget");
    }
    CriterionResult::new(4, "multi-task training", ok && within_budget, detail)
}

pub fn check_firmness_ordering(cmp: &ObjectComparison) -> CriterionResult {
    let ok = cmp.ordered.iter().filter(|o| **o).count();
    let means: Vec<String> =
        cmp.objects.iter().zip(&cmp.mean_phi).map(|(o, p)| format!("{o} {p:.4}")).collect();
    let detail = format!("{ok}/{} runs ordered; mean phi {}", cmp.ordered.len(), means.join(", "));
    CriterionResult::new(5, "firmness ordering", ok == cmp.ordered.len() && ok > 0, detail)
}

pub fn check_progressive(rep: &ProgressiveReport) -> CriterionResult {
    let rs: Vec<f64> = rep.sample.rows.iter().map(|r| r.stats.r).collect();
    let r_ok = rs.iter().all(|r| *r >= 0.8);
    let bad_days: Vec<String> = rep
        .firmness_ordered
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(d, _)| (d + 1).to_string())
        .collect();
    let rs_text: Vec<String> = rs.iter().map(|r| format!("{r:.3}")).collect();
    let order_text =
        if bad_days.is_empty() { "ordering held every day".to_string() } else { format!("ordering broken on day {}", bad_days.join(", ")) };
    let detail = format!("sample-dimension r [{}], {order_text}", rs_text.join(", "));
    CriterionResult::new(6, "progressive experiment", r_ok && bad_days.is_empty(), detail)
}

/// Slow ramp to 35 kPa for the quasi-static force and a step for the saturated force.
pub fn check_blocking_force(params: &ActuatorParams, seeds: &SeedTree) -> Result<CriterionResult, HarnessError> {
    let probe = ObjectModel::rigid_probe();
    let rate = 50.0;
    let slow = PressureProfile::ramp(35.0, 30.0, 10.0, 0.0, rate)?;
    let rec = simulate_blocked_actuation(&slow, &probe, params, seeds.derive("verify/blocked/ramp"))?;
    let quasi = *rec.normal_forces().last().expect("non-empty record");
    let step = PressureProfile::step(35.0, 0.0, 8.0, 0.0, rate)?;
    let rec = simulate_blocked_actuation(&step, &probe, params, seeds.derive("verify/blocked/step"))?;
    let forces = rec.normal_forces();
    let saturated = forces.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let last = *forces.last().expect("non-empty record");
    let settled = (saturated - last).abs() <= 0.01 * saturated;
    let ok = (quasi - 1.4).abs() <= 0.2 && (1.5..=1.8).contains(&saturated) && settled;
    let detail = format!("quasi-static {quasi:.3} N, step saturates at {saturated:.3} N (final {last:.3} N)");
    Ok(CriterionResult::new(7, "blocking force", ok, detail))
}

/// Realised magnitude against the closed form on 100 frequencies, and passband ripple at the extrema.
pub fn check_filter(spec: &FilterSpec) -> Result<CriterionResult, HarnessError> {
    let sos = design_cheby1(spec)?;
    let nyquist = spec.sample_rate_hz / 2.0;
    let worst = (0..100)
        .map(|i| {
            let f = nyquist * i as f64 / 100.0;
            (sos.magnitude(f) - spec.ideal_magnitude(f)).abs()
        })
        .fold(0.0, f64::max);
    // Passband extrema sit where T_n(Ω) is 0 or ±1; map them back through the bilinear warp.
    let warp = (std::f64::consts::PI * spec.cutoff_hz / spec.sample_rate_hz).tan();
    let n = spec.order as f64;
    let freq = |omega: f64| spec.sample_rate_hz / std::f64::consts::PI * (omega * warp).atan();
    let db = |f: f64| 20.0 * sos.magnitude(f).log10();
    let extrema: Vec<f64> = (0..=spec.order)
        .map(|k| (k as f64 * std::f64::consts::PI / (2.0 * n)).cos())
        .map(|omega| db(freq(omega)))
        .collect();
    let ripple = extrema.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - extrema.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = worst <= 1e-6 && (ripple - spec.passband_ripple_db).abs() <= 1e-6;
    let detail = format!(
        "max magnitude error {worst:.2e}, ripple {ripple:.9} dB vs {} dB",
        spec.passband_ripple_db
    );
    Ok(CriterionResult::new(8, "filter", ok, detail))
}

fn dense_only() -> Architecture {
    Architecture {
        steps: 1,
        features: 4,
        branches: vec![BranchSpec {
            name: "dense".into(),
            input: BranchInput::Flat,
            layers: vec![
                LayerSpec::dense(4, 6, Activation::Tanh),
                LayerSpec::dense(6, 5, Activation::Relu),
                LayerSpec::dense(5, 2, Activation::Linear),
            ],
            output: OutputKind::Regression,
        }],
    }
}

fn lstm_only() -> Architecture {
    Architecture {
        steps: 5,
        features: 3,
        branches: vec![BranchSpec {
            name: "lstm".into(),
            input: BranchInput::Sequence,
            layers: vec![LayerSpec::lstm(3, 4), LayerSpec::dense(4, 2, Activation::Linear)],
            output: OutputKind::Regression,
        }],
    }
}

fn softmax_only() -> Architecture {
    Architecture {
        steps: 1,
        features: 4,
        branches: vec![BranchSpec {
            name: "softmax".into(),
            input: BranchInput::Flat,
            layers: vec![LayerSpec::dense(4, 5, Activation::Linear), LayerSpec::softmax(5)],
            output: OutputKind::Classification,
        }],
    }
}

/// Finite-difference gradient checks on each layer family and both model topologies.
pub fn check_gradients(seeds: &SeedTree) -> Result<CriterionResult, HarnessError> {
    use rand::Rng;
    let cases: [(&str, fn(u64) -> Result<Network, HarnessError>, fn(usize) -> Vec<Target>, Vec<f64>); 5] = [
        ("dense", |s| Ok(Network::new(dense_only(), s)?), |_| vec![Target::Values(vec![0.3, -0.2])], vec![1.0]),
        ("lstm", |s| Ok(Network::new(lstm_only(), s)?), |_| vec![Target::Values(vec![0.1, 0.4])], vec![1.0]),
        ("softmax-ce", |s| Ok(Network::new(softmax_only(), s)?), |c| vec![Target::Class(c % 5)], vec![1.0]),
        (
            "decoupler",
            |s| Ok(Network::new(decoupler_architecture(&[8, 6]), s)?),
            |_| vec![Target::Values(vec![0.2, -0.1, 0.5])],
            vec![1.0],
        ),
        (
            "multitask",
            |s| Ok(build_multitask(4, 5, &[6, 4], 5, s)?),
            |c| vec![Target::Values(vec![0.3]), Target::Values(vec![0.6]), Target::Class(c % 5)],
            vec![1.0, 0.5, 2.0],
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, make, targets, weights) in cases {
        let mut worst = 0.0f64;
        for s in 0..GRAD_SEEDS {
            let seed = seeds.derive(&format!("verify/gradients/{name}/{s}"));
            let net = make(seed)?;
            let mut rng = rng_from_seed(seed);
            let input: Vec<f64> = (0..net.architecture().input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sample = Sample { input, targets: targets(s as usize) };
            let report = finite_diff_check(&net, &sample, &weights, 1e-5)?;
            worst = worst.max(report.max_relative_error);
        }
        ok &= worst < GRAD_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let detail = format!("max relative error over {GRAD_SEEDS} seeds: {}", parts.join(", "));
    Ok(CriterionResult::new(9, "gradients", ok, detail))
}

pub fn check_physics() -> Result<CriterionResult, HarnessError> {
    let magnet = MagnetPose::new(Vector3::zeros(), Vector3::new(0.4, -0.2, 30.0));
    let mut worst = 0.0f64;
    for dir in [Vector3::new(0.0, 0.0, 1.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.3, -0.5, 0.8).normalize()] {
        let b = |r: f64| dipole_field(&magnet, &(dir * r)).map(|v| v.norm());
        let slope = (b(40.0)?.ln() - b(2.0)?.ln()) / (40.0f64.ln() - 2.0f64.ln());
        worst = worst.max((slope + 3.0).abs());
    }
    let f = [0.0, 3.5, 7.5].map(|d| ferrite_disturbance(d).norm());
    let ok = worst <= 1e-6 && (f[0] - 0.4).abs() < 1e-9 && f[1] <= 0.1 && f[2] <= 0.04;
    let detail = format!(
        "max |slope + 3| {worst:.1e}; ferrite {:.4} / {:.4} / {:.4} G at 0 / 3.5 / 7.5 mm",
        f[0], f[1], f[2]
    );
    Ok(CriterionResult::new(10, "physics", ok, detail))
}

pub fn check_dynamics(params: &ActuatorParams, seeds: &SeedTree) -> Result<CriterionResult, HarnessError> {
    let (tau, rate) = (0.5, 50.0);
    let dt = 1.0 / rate;
    let synthetic: Vec<f64> = (0..500).map(|k| 1.0 - (-(k as f64) * dt / tau).exp()).collect();
    let rise = step_metrics(&synthetic, dt, 0.1)?.rise_time;
    let expected = tau * 9f64.ln();
    let profile = PressureProfile::step(35.0, 0.0, 6.0, 0.0, rate)?;
    let rec = simulate_free_actuation(&profile, params, seeds.derive("verify/dynamics/step"))?;
    let settle = step_metrics(&rec.pressures(), rec.dt(), 0.2)?.settling_time;
    let ok = (rise - expected).abs() <= 2.0 * dt && (settle - 1.5).abs() <= 0.3;
    let detail = format!("rise {rise:.3} s vs {expected:.3} s, pressure step settles in {settle:.2} s");
    Ok(CriterionResult::new(11, "dynamic metrics", ok, detail))
}

/// Runs criteria 1 to 11 with models trained from `config`.
pub fn run_suite(config: &ProjectConfig, options: SuiteOptions) -> Result<VerifyReport, HarnessError> {
    let exec = options.exec;
    let seeds = SeedTree::new(config.seed);
    let mut results = vec![check_statistics()];

    let models = build_models(config, exec)?;
    let started = Instant::now();
    let rows = decouple_eval_records(config, &seeds)?
        .into_iter()
        .map(|(name, rec)| {
            evaluate_decoupling(&name, &rec, &models.decouplers[0], &models.tactile, &config.filter).map(|r| r.0)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ramp_s = models.timings.decoupler_s + started.elapsed().as_secs_f64();
    results.push(check_decoupling_ramp(&rows[0], ramp_s < 120.0));
    results.push(check_decoupling_step(&rows[1]));
    let training_s = models.timings.grid_s + models.timings.tactile_s;
    results.push(check_training(&models.tactile_metrics, training_s < 600.0));

    let g = gripper(config, &models.decouplers, &models.tactile);
    let params = calibrate_gripper(config, &g, &seeds)?;
    results.push(check_firmness_ordering(&object_comparison(config, &g, &params, &seeds, exec)?));
    results.push(check_progressive(&progressive_report(config, &g, &params, &seeds, exec)?));

    results.push(check_blocking_force(&config.actuator, &seeds)?);
    results.push(check_filter(&config.filter)?);
    results.push(check_gradients(&seeds)?);
    results.push(check_physics()?);
    results.push(check_dynamics(&config.actuator, &seeds)?);
    Ok(VerifyReport { seed: config.seed, config_hash: config.hash(), results })
}
