//! The five top-level commands. Each writes into `output_dir/<command>/` and finishes with a manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::pipeline::{
    build_models, calibrate_gripper, decouple_eval_records, evaluate_decoupling, grid_file_name, gripper,
    individual_report, load_grid_dir, object_comparison, progressive_report, simulate_training_grid,
    train_actuator_decoupler, train_tactile, DecoupleEvalRow, ACTUATOR_IDS,
};
use super::verify::{run_suite, CriterionResult, SuiteOptions, VerifyReport};
use super::{fmt_f, io_err, Context, HarnessError, Outputs, Report, RunManifest, Table};
use crate::actuator::{
    simulate_blocked_actuation, simulate_free_actuation, ObjectModel, PressureProfile, TimeSeriesRecord,
};
use crate::decoupler::{
    sweep_dataset_from_record, sweep_profile, sweep_rmse, train_decoupler, DecouplerModel,
};
use crate::firmness::{calibration_objects, run_probe};
use crate::sigproc::step_metrics;
use crate::tactile::TactileModel;

/// Simulation scenarios for [`cmd_simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// No-contact staircase sweep.
    Free,
    /// Slow ramp against a rigid probe.
    Blocked,
    /// Every grid point of the indentation protocol.
    IndentationGrid,
    /// No-contact pressure step.
    Step,
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "free" => Ok(Scenario::Free),
            "blocked" => Ok(Scenario::Blocked),
            "indentation-grid" => Ok(Scenario::IndentationGrid),
            "step" => Ok(Scenario::Step),
            other => Err(HarnessError::Usage(format!(
                "unknown scenario `{other}`, expected free, blocked, indentation-grid or step"
            ))),
        }
    }
}

pub fn cmd_simulate(ctx: &Context, scenario: Scenario) -> Result<RunManifest, HarnessError> {
    let config = &ctx.config;
    let seeds = ctx.seeds().child("simulate");
    let peak = config.sweep.peak_kpa;
    let rate = config.sweep.sample_rate;
    let mut out = Outputs::create(ctx, "simulate")?;
    match scenario {
        Scenario::Free => {
            let rec = simulate_free_actuation(&sweep_profile(&config.sweep)?, &config.actuator, seeds.derive("free"))?;
            out.write_record("free.csv", &rec, None)?;
        }
        Scenario::Blocked => {
            let profile = PressureProfile::ramp(peak, 30.0, 10.0, 0.0, rate)?;
            let rec =
                simulate_blocked_actuation(&profile, &ObjectModel::rigid_probe(), &config.actuator, seeds.derive("blocked"))?;
            out.write_record("blocked.csv", &rec, None)?;
        }
        Scenario::Step => {
            let profile = PressureProfile::step(peak, 0.0, 6.0, 0.0, rate)?;
            let rec = simulate_free_actuation(&profile, &config.actuator, seeds.derive("step"))?;
            out.write_record("step.csv", &rec, None)?;
            let metrics = step_metrics(&rec.pressures(), rec.dt(), 0.2)?;
            out.write_json("step_metrics.json", &metrics)?;
        }
        Scenario::IndentationGrid => {
            let grid = simulate_training_grid(config, &ctx.seeds(), ctx.exec)?;
            for gr in &grid.records {
                out.write_record(&format!("grid/{}", grid_file_name(gr.point)), &gr.record, None)?;
            }
        }
    }
    out.finish(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainTarget {
    Decoupler,
    Tactile,
}

impl FromStr for TrainTarget {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decoupler" => Ok(TrainTarget::Decoupler),
            "tactile" => Ok(TrainTarget::Tactile),
            other => Err(HarnessError::Usage(format!("unknown target `{other}`, expected decoupler or tactile"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainArgs {
    pub target: TrainTarget,
    /// Staircase record (decoupler) or grid directory (tactile); simulated when absent.
    pub data: Option<PathBuf>,
    /// Decoupler applied before windowing the tactile dataset; trained when absent.
    pub decoupler: Option<PathBuf>,
    /// 0 for the first actuator, 1 for the second.
    pub actuator: usize,
}

#[derive(Serialize)]
struct DecouplerSummary<'a> {
    actuator: &'a str,
    pairs: usize,
    rmse_gauss: [f64; 3],
    epochs: usize,
    best_epoch: usize,
}

fn require(path: &Path) -> Result<(), HarnessError> {
    if path.exists() {
        Ok(())
    } else {
        Err(HarnessError::MissingInput(path.to_path_buf()))
    }
}

/// Trains a model and writes it with its metrics; returns the manifest and a one-line summary.
pub fn cmd_train(ctx: &Context, args: &TrainArgs) -> Result<(RunManifest, String), HarnessError> {
    let config = &ctx.config;
    let seeds = ctx.seeds();
    if let Some(p) = &args.data {
        require(p)?;
    }
    if let Some(p) = &args.decoupler {
        require(p)?;
    }
    if args.actuator > 1 {
        return Err(HarnessError::Usage(format!("actuator index {} is not 0 or 1", args.actuator)));
    }
    match args.target {
        TrainTarget::Decoupler => {
            let id = ACTUATOR_IDS[args.actuator];
            let (model, dataset) = match &args.data {
                Some(path) => {
                    let (rec, _) = TimeSeriesRecord::read_csv_file(path)?;
                    let dataset = sweep_dataset_from_record(&rec, id, &config.sweep, &config.filter)?;
                    let dc = super::pipeline::decoupler_config(config, &seeds, id);
                    (train_decoupler(&dataset, &dc, ctx.exec)?, dataset)
                }
                None => train_actuator_decoupler(config, &seeds, args.actuator, ctx.exec)?,
            };
            let rmse = sweep_rmse(&model, &dataset)?;
            let mut out = Outputs::create(ctx, "train")?;
            let name = format!("decoupler_{id}.json");
            model.save(out.reserve(&name)?)?;
            let summary = DecouplerSummary {
                actuator: id,
                pairs: dataset.pairs.len(),
                rmse_gauss: rmse,
                epochs: model.model.history.len(),
                best_epoch: model.model.best_epoch,
            };
            out.write_json(&format!("decoupler_{id}_metrics.json"), &summary)?;
            let manifest = out.finish(ctx)?;
            let line = format!(
                "decoupler {id}: RMSE {} / {} / {} G over {} pairs",
                fmt_f(rmse[0], 4),
                fmt_f(rmse[1], 4),
                fmt_f(rmse[2], 4),
                dataset.pairs.len()
            );
            Ok((manifest, line))
        }
        TrainTarget::Tactile => {
            let grid = match &args.data {
                Some(dir) => load_grid_dir(dir, config)?,
                None => simulate_training_grid(config, &seeds, ctx.exec)?,
            };
            let decoupler = match &args.decoupler {
                Some(p) => DecouplerModel::load(p)?,
                None => train_actuator_decoupler(config, &seeds, 0, ctx.exec)?.0,
            };
            let trained = train_tactile(config, &seeds, &grid, &decoupler, ctx.exec)?;
            let mut out = Outputs::create(ctx, "train")?;
            trained.model.save(out.reserve("tactile.json")?)?;
            out.write_json("tactile_metrics.json", &trained.metrics)?;
            let manifest = out.finish(ctx)?;
            let m = &trained.metrics;
            let line = format!(
                "tactile: accuracy {} on {} windows, scaled MAE shear {} normal {}",
                fmt_f(m.position_accuracy, 4),
                m.classified_windows,
                fmt_f(m.shear_mae, 4),
                fmt_f(m.normal_mae, 4)
            );
            Ok((manifest, line))
        }
    }
}

/// Decouplers for both actuators and the tactile model, from a directory or trained fresh.
///
/// A directory must hold `decoupler_A1.json`, `decoupler_A2.json` and `tactile.json`, as written by `train`.
fn load_or_build(ctx: &Context, dir: Option<&Path>) -> Result<([DecouplerModel; 2], TactileModel), HarnessError> {
    match dir {
        Some(dir) => {
            let file = |name: &str| -> Result<PathBuf, HarnessError> {
                let p = dir.join(name);
                require(&p)?;
                Ok(p)
            };
            let d1 = DecouplerModel::load(file("decoupler_A1.json")?)?;
            let d2 = DecouplerModel::load(file("decoupler_A2.json")?)?;
            let tactile = TactileModel::load(file("tactile.json")?)?;
            Ok(([d1, d2], tactile))
        }
        None => {
            let m = build_models(&ctx.config, ctx.exec)?;
            Ok((m.decouplers, m.tactile))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DecoupleEvalArgs {
    /// Record to evaluate; the built-in ramp and step are used when absent.
    pub record: Option<PathBuf>,
    /// Directory with trained models; trained fresh when absent.
    pub models: Option<PathBuf>,
}

#[derive(Serialize)]
struct DecoupleEvalReport {
    rows: Vec<DecoupleEvalRow>,
}

impl Report for DecoupleEvalReport {
    fn tables(&self) -> Vec<(String, Table)> {
        let mut t = Table::new([
            "name",
            "mode",
            "frames",
            "max_abs_normal_n",
            "fraction_below_ramp_limit",
            "steady_frames",
            "steady_max_abs_normal_n",
        ]);
        for row in &self.rows {
            for (mode, s) in [("decoupled", &row.decoupled), ("raw", &row.raw)] {
                t.push([
                    row.name.clone(),
                    mode.to_string(),
                    s.frames.to_string(),
                    fmt_f(s.max_abs_normal_n, 6),
                    fmt_f(s.fraction_below_ramp_limit, 6),
                    s.steady_frames.to_string(),
                    fmt_f(s.steady_max_abs_normal_n, 6),
                ]);
            }
        }
        vec![(String::new(), t)]
    }
}

/// Predicted force with and without decoupling; writes per-frame traces and residual statistics.
pub fn cmd_decouple_eval(ctx: &Context, args: &DecoupleEvalArgs) -> Result<(RunManifest, String), HarnessError> {
    let config = &ctx.config;
    let records = match &args.record {
        Some(p) => {
            require(p)?;
            let name = p.file_stem().map_or("record".into(), |s| s.to_string_lossy().into_owned());
            vec![(name, TimeSeriesRecord::read_csv_file(p)?.0)]
        }
        None => decouple_eval_records(config, &ctx.seeds())?,
    };
    let (decouplers, tactile) = load_or_build(ctx, args.models.as_deref())?;
    let mut out = Outputs::create(ctx, "decouple-eval")?;
    let mut rows = Vec::new();
    let mut summary = String::new();
    for (name, rec) in &records {
        let (row, traces) = evaluate_decoupling(name, rec, &decouplers[0], &tactile, &config.filter)?;
        out.write_text(&format!("traces_{name}.csv"), &traces.table().to_csv()?)?;
        let _ = writeln!(
            summary,
            "{name}: decoupled max {} N ({}% < 0.3 N, steady max {} N); raw max {} N",
            fmt_f(row.decoupled.max_abs_normal_n, 3),
            fmt_f(100.0 * row.decoupled.fraction_below_ramp_limit, 1),
            fmt_f(row.decoupled.steady_max_abs_normal_n, 3),
            fmt_f(row.raw.max_abs_normal_n, 3)
        );
        rows.push(row);
    }
    out.write_report("report", &DecoupleEvalReport { rows }, ctx.format)?;
    Ok((out.finish(ctx)?, summary.trim_end().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    ThreeObjects,
    Progressive,
    Individual,
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "three-objects" => Ok(Experiment::ThreeObjects),
            "progressive" => Ok(Experiment::Progressive),
            "individual" => Ok(Experiment::Individual),
            other => Err(HarnessError::Usage(format!(
                "unknown experiment `{other}`, expected three-objects, progressive or individual"
            ))),
        }
    }
}

/// Calibrates the gripper, runs one firmness experiment and writes its report.
pub fn cmd_firmness(
    ctx: &Context,
    experiment: Experiment,
    models: Option<&Path>,
) -> Result<(RunManifest, String), HarnessError> {
    let config = &ctx.config;
    let seeds = ctx.seeds();
    let (decouplers, tactile) = load_or_build(ctx, models)?;
    let g = gripper(config, &decouplers, &tactile);
    let params = calibrate_gripper(config, &g, &seeds)?;
    let mut out = Outputs::create(ctx, "firmness")?;
    let summary = match experiment {
        Experiment::ThreeObjects => {
            let cmp = object_comparison(config, &g, &params, &seeds, ctx.exec)?;
            for object in calibration_objects() {
                let rec = run_probe(&g, &object, &params, config.firmness.cycles, seeds.derive("firmness/trace"))?;
                for (i, id) in ACTUATOR_IDS.iter().enumerate() {
                    out.with_file(&format!("probe_{}_{id}.csv", object.name), |w| Ok(rec.write_csv(i, w)?))?;
                }
            }
            out.write_report("three_objects", &cmp, ctx.format)?;
            let means: Vec<String> =
                cmp.objects.iter().zip(&cmp.mean_phi).map(|(o, p)| format!("{o} {}", fmt_f(*p, 4))).collect();
            format!(
                "mean phi {}; ordered in {}/{} runs",
                means.join(", "),
                cmp.ordered.iter().filter(|o| **o).count(),
                cmp.ordered.len()
            )
        }
        Experiment::Progressive => {
            let rep = progressive_report(config, &g, &params, &seeds, ctx.exec)?;
            out.write_report("progressive", &rep, ctx.format)?;
            format!("sample dimension:\n{}time dimension:\n{}", rep.sample.to_text(), rep.time.to_text())
        }
        Experiment::Individual => {
            let rep = individual_report(config, &g, &params, &seeds, ctx.exec)?;
            out.write_report("individual", &rep, ctx.format)?;
            let s = &rep.stats;
            format!(
                "r {} r2 {} p {} CI {} n {}",
                fmt_f(s.r, 3),
                fmt_f(s.r_squared, 3),
                fmt_f(s.p_value, 3),
                fmt_f(s.ci_half_width, 3),
                s.n
            )
        }
    };
    Ok((out.finish(ctx)?, summary.trim_end().to_string()))
}

/// Runs the acceptance suite and writes `report.json` and `report.txt`.
///
/// With `self_check` the suite is run a second time and the two reports are compared byte for byte.
pub fn cmd_verify(ctx: &Context, self_check: bool) -> Result<(RunManifest, VerifyReport), HarnessError> {
    let options = SuiteOptions { exec: ctx.exec };
    let mut report = run_suite(&ctx.config, options)?;
    if self_check {
        let first = serde_json::to_string_pretty(&report)?;
        let second = serde_json::to_string_pretty(&run_suite(&ctx.config, options)?)?;
        let same = first == second;
        report.results.push(CriterionResult {
            id: 12,
            name: "reproducibility".into(),
            passed: same,
            detail: if same {
                format!("two runs gave identical {}-byte reports", first.len())
            } else {
                "two runs with the same seed gave different reports".into()
            },
        });
    }
    let mut out = Outputs::create(ctx, "verify")?;
    out.write_json("report.json", &report)?;
    out.write_text("report.txt", &report.to_text())?;
    Ok((out.finish(ctx)?, report))
}

/// Reads a file written by a command, mapping absence to [`HarnessError::MissingInput`].
pub fn read_artifact(path: &Path) -> Result<Vec<u8>, HarnessError> {
    require(path)?;
    fs::read(path).map_err(io_err(path))
}
