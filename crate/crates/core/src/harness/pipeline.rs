//! Model building and experiment runners shared by the commands and the verification suite.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{fmt_f, HarnessError, Report, Table};
use crate::actuator::{
    simulate_free_actuation, GridKind, GridPoint, PressureProfile, TimeSeriesRecord,
};
use crate::analysis::{correlation_report, CorrelationReport, CorrelationStats, Dimension};
use crate::config::ProjectConfig;
use crate::decoupler::{
    decoupled_inference, generate_sweep_dataset, sweep_rmse, train_decoupler, DecouplerConfig, DecouplerModel,
    SweepDataset,
};
use crate::firmness::{
    calibrate_on, calibration_objects, estimate_firmness, individual_experiment, progressive_experiment, run_probe,
    ActuatorUnit, FirmnessParams, Gripper, IndividualResult, ProgressiveResult,
};
use crate::par::Execution;
use crate::seed::SeedTree;
use crate::sigproc::{design_cheby1, filter_signal, FilterSpec};
use crate::tactile::{
    make_dataset, simulate_grid, train_multitask, GridRecord, GridSimulation, MultiTaskOutput, TactileConfig,
    TactileMetrics, TactileModel, TactileTraining,
};

/// Residual force bound for the no-contact ramp, N.
pub const RAMP_LIMIT_N: f64 = 0.3;
/// Residual force bound for the no-contact step at steady state, N.
pub const STEP_LIMIT_N: f64 = 0.4;

pub(crate) const ACTUATOR_IDS: [&str; 2] = ["A1", "A2"];

/// Decoupler settings with initialisation and shuffling seeds drawn from the root seed.
pub fn decoupler_config(config: &ProjectConfig, seeds: &SeedTree, id: &str) -> DecouplerConfig {
    let mut c = config.decoupler.clone();
    c.seed = seeds.derive(&format!("decoupler/{id}/init"));
    c.train.rng_seed = seeds.derive(&format!("decoupler/{id}/shuffle"));
    c
}

/// Tactile settings with split, initialisation and shuffling seeds drawn from the root seed.
pub fn tactile_config(config: &ProjectConfig, seeds: &SeedTree) -> TactileConfig {
    let mut c = config.tactile.clone();
    c.seed = seeds.derive("tactile/init");
    c.train.rng_seed = seeds.derive("tactile/shuffle");
    c
}

fn actuator_params(config: &ProjectConfig, index: usize) -> &crate::actuator::ActuatorParams {
    if index == 0 {
        &config.actuator
    } else {
        &config.second_actuator
    }
}

/// Sweeps and trains the decoupler of actuator `index` (0 or 1).
pub fn train_actuator_decoupler(
    config: &ProjectConfig,
    seeds: &SeedTree,
    index: usize,
    exec: Execution,
) -> Result<(DecouplerModel, SweepDataset), HarnessError> {
    let id = ACTUATOR_IDS[index];
    let dataset = generate_sweep_dataset(
        actuator_params(config, index),
        id,
        &config.sweep,
        &config.filter,
        seeds.derive(&format!("sweep/{id}")),
    )?;
    let model = train_decoupler(&dataset, &decoupler_config(config, seeds, id), exec)?;
    Ok((model, dataset))
}

/// Indentation grid of the first actuator.
pub fn simulate_training_grid(
    config: &ProjectConfig,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<GridSimulation, HarnessError> {
    Ok(simulate_grid(&config.actuator, &config.grid, &seeds.child("grid"), exec)?)
}

/// Windows the grid through the first actuator's decoupler and trains the multi-task model.
pub fn train_tactile(
    config: &ProjectConfig,
    seeds: &SeedTree,
    grid: &GridSimulation,
    decoupler: &DecouplerModel,
    exec: Execution,
) -> Result<TactileTraining, HarnessError> {
    let tc = tactile_config(config, seeds);
    let samples = make_dataset(grid, Some(decoupler), &config.filter, &tc)?;
    Ok(train_multitask(&samples, &tc, exec)?)
}

/// Wall-clock cost of model building, s.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    pub decoupler_s: f64,
    pub grid_s: f64,
    pub tactile_s: f64,
}

/// Everything a gripper needs, trained from one configuration.
#[derive(Debug, Clone)]
pub struct Models {
    pub decouplers: [DecouplerModel; 2],
    pub decoupler_rmse: [[f64; 3]; 2],
    pub tactile: TactileModel,
    pub tactile_metrics: TactileMetrics,
    pub timings: Timings,
}

pub fn build_models(config: &ProjectConfig, exec: Execution) -> Result<Models, HarnessError> {
    let seeds = SeedTree::new(config.seed);
    let t = Instant::now();
    let (d1, s1) = train_actuator_decoupler(config, &seeds, 0, exec)?;
    let decoupler_s = t.elapsed().as_secs_f64();
    let (d2, s2) = train_actuator_decoupler(config, &seeds, 1, exec)?;
    let rmse = [sweep_rmse(&d1, &s1)?, sweep_rmse(&d2, &s2)?];
    let t = Instant::now();
    let grid = simulate_training_grid(config, &seeds, exec)?;
    let grid_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let tactile = train_tactile(config, &seeds, &grid, &d1, exec)?;
    let tactile_s = t.elapsed().as_secs_f64();
    Ok(Models {
        decouplers: [d1, d2],
        decoupler_rmse: rmse,
        tactile: tactile.model,
        tactile_metrics: tactile.metrics,
        timings: Timings { decoupler_s, grid_s, tactile_s },
    })
}

pub fn gripper<'a>(config: &ProjectConfig, decouplers: &[DecouplerModel; 2], tactile: &'a TactileModel) -> Gripper<'a> {
    Gripper {
        actuators: [0, 1].map(|i| ActuatorUnit {
            id: ACTUATOR_IDS[i].to_string(),
            params: actuator_params(config, i).clone(),
            decoupler: decouplers[i].clone(),
        }),
        tactile,
        filter: config.filter,
    }
}

/// Fits `a` and `b` on the default calibration objects.
pub fn calibrate_gripper(
    config: &ProjectConfig,
    gripper: &Gripper<'_>,
    seeds: &SeedTree,
) -> Result<FirmnessParams, HarnessError> {
    Ok(calibrate_on(
        gripper,
        &calibration_objects(),
        &config.firmness.params,
        config.firmness.cycles,
        &seeds.child("firmness/calibration"),
    )?)
}

/// Loads grid records named `normal_r<row>_c<col>.csv` and `shear_r<row>_c<col>.csv`.
pub fn load_grid_dir(dir: &Path, config: &ProjectConfig) -> Result<GridSimulation, HarnessError> {
    if !dir.is_dir() {
        return Err(HarnessError::MissingInput(dir.to_path_buf()));
    }
    let mut kinds = vec![GridKind::Normal];
    if config.grid.shear {
        kinds.push(GridKind::Shear);
    }
    let mut records = Vec::new();
    for kind in kinds {
        for point in GridPoint::all(kind) {
            let path = dir.join(grid_file_name(point));
            if !path.is_file() {
                return Err(HarnessError::MissingInput(path));
            }
            let (record, _) = TimeSeriesRecord::read_csv_file(&path)?;
            records.push(GridRecord { point, record });
        }
    }
    Ok(GridSimulation { protocol: config.grid.clone(), records })
}

pub(crate) fn grid_file_name(point: GridPoint) -> String {
    let kind = match point.kind {
        GridKind::Normal => "normal",
        GridKind::Shear => "shear",
    };
    format!("{kind}_r{}_c{}.csv", point.row, point.col)
}

/// Seeded repetitions of probing the three calibration objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectComparison {
    pub objects: Vec<String>,
    pub a: f64,
    pub b: f64,
    /// φ per run, in object order.
    pub runs: Vec<Vec<f64>>,
    /// Whether each run orders the objects strictly decreasing in φ.
    pub ordered: Vec<bool>,
    pub mean_phi: Vec<f64>,
}

impl Report for ObjectComparison {
    fn tables(&self) -> Vec<(String, Table)> {
        let mut t = Table::new(std::iter::once("run".to_string()).chain(self.objects.iter().cloned()).chain(["ordered".into()]));
        for (i, (row, ok)) in self.runs.iter().zip(&self.ordered).enumerate() {
            t.push(
                std::iter::once(i.to_string()).chain(row.iter().map(|v| fmt_f(*v, 6))).chain([ok.to_string()]),
            );
        }
        vec![(String::new(), t)]
    }
}

pub fn object_comparison(
    config: &ProjectConfig,
    gripper: &Gripper<'_>,
    params: &FirmnessParams,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<ObjectComparison, HarnessError> {
    let objects = calibration_objects();
    let runs = exec.map_range(config.firmness.object_runs, |run| -> Result<Vec<f64>, HarnessError> {
        let run_seeds = seeds.child(&format!("firmness/objects/run{run}"));
        objects
            .iter()
            .map(|o| {
                let record = run_probe(gripper, o, params, config.firmness.cycles, run_seeds.derive(&o.name))?;
                Ok(estimate_firmness(&record, params)?.phi)
            })
            .collect()
    });
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ordered = runs.iter().map(|r| r.windows(2).all(|w| w[0] > w[1])).collect();
    let mean_phi = (0..objects.len()).map(|j| runs.iter().map(|r| r[j]).sum::<f64>() / runs.len() as f64).collect();
    Ok(ObjectComparison {
        objects: objects.iter().map(|o| o.name.clone()).collect(),
        a: params.a,
        b: params.b,
        runs,
        ordered,
        mean_phi,
    })
}

/// Progressive matrices plus correlation tables along both dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveReport {
    pub a: f64,
    pub b: f64,
    pub result: ProgressiveResult,
    pub sample: CorrelationReport,
    pub time: CorrelationReport,
    /// Per day: firmness increases strictly with fruit index.
    pub firmness_ordered: Vec<bool>,
    /// Per day: reference increases strictly with fruit index.
    pub reference_ordered: Vec<bool>,
}

fn matrix_table(fruits: &[String], m: &[Vec<f64>]) -> Table {
    let mut t = Table::new(std::iter::once("day".to_string()).chain(fruits.iter().cloned()));
    for (d, row) in m.iter().enumerate() {
        t.push(std::iter::once((d + 1).to_string()).chain(row.iter().map(|v| fmt_f(*v, 6))));
    }
    t
}

fn correlation_table(rep: &CorrelationReport) -> Table {
    let mut t = Table::new(["label", "r", "r2", "p", "ci_half_width", "n"]);
    for row in &rep.rows {
        let s = &row.stats;
        t.push([
            row.label.clone(),
            fmt_f(s.r, 6),
            fmt_f(s.r_squared, 6),
            fmt_f(s.p_value, 6),
            fmt_f(s.ci_half_width, 6),
            s.n.to_string(),
        ]);
    }
    t
}

impl Report for ProgressiveReport {
    fn tables(&self) -> Vec<(String, Table)> {
        vec![
            ("firmness".into(), matrix_table(&self.result.fruits, &self.result.firmness)),
            ("reference".into(), matrix_table(&self.result.fruits, &self.result.reference)),
            ("stiffness".into(), matrix_table(&self.result.fruits, &self.result.stiffness)),
            ("sample".into(), correlation_table(&self.sample)),
            ("time".into(), correlation_table(&self.time)),
        ]
    }
}

fn strictly_increasing(row: &[f64]) -> bool {
    row.windows(2).all(|w| w[0] < w[1])
}

pub fn progressive_report(
    config: &ProjectConfig,
    gripper: &Gripper<'_>,
    params: &FirmnessParams,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<ProgressiveReport, HarnessError> {
    let result =
        progressive_experiment(gripper, params, &config.firmness.progressive, &seeds.child("firmness/progressive"), exec)?;
    Ok(ProgressiveReport {
        a: params.a,
        b: params.b,
        sample: correlation_report(&result.reference, &result.firmness, Dimension::Sample)?,
        time: correlation_report(&result.reference, &result.firmness, Dimension::Time)?,
        firmness_ordered: result.firmness.iter().map(|r| strictly_increasing(r)).collect(),
        reference_ordered: result.reference.iter().map(|r| strictly_increasing(r)).collect(),
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualReport {
    pub a: f64,
    pub b: f64,
    pub result: IndividualResult,
    pub stats: CorrelationStats,
}

impl Report for IndividualReport {
    fn tables(&self) -> Vec<(String, Table)> {
        let r = &self.result;
        let mut t = Table::new(["rank", "label", "stiffness", "reference", "firmness"]);
        for i in 0..r.labels.len() {
            t.push([
                (i + 1).to_string(),
                r.labels[i].to_string(),
                fmt_f(r.stiffness[i], 6),
                fmt_f(r.reference[i], 6),
                fmt_f(r.firmness[i], 6),
            ]);
        }
        let mut s = Table::new(["r", "r2", "p", "ci_half_width", "n"]);
        let st = &self.stats;
        s.push([fmt_f(st.r, 6), fmt_f(st.r_squared, 6), fmt_f(st.p_value, 6), fmt_f(st.ci_half_width, 6), st.n.to_string()]);
        vec![("fruits".into(), t), ("correlation".into(), s)]
    }
}

pub fn individual_report(
    config: &ProjectConfig,
    gripper: &Gripper<'_>,
    params: &FirmnessParams,
    seeds: &SeedTree,
    exec: Execution,
) -> Result<IndividualReport, HarnessError> {
    let result =
        individual_experiment(gripper, params, &config.firmness.individual, &seeds.child("firmness/individual"), exec)?;
    let stats = CorrelationStats::compute(&result.reference, &result.firmness)?;
    Ok(IndividualReport { a: params.a, b: params.b, result, stats })
}

/// Predicted-force statistics of a no-contact record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Frames with a full inference window.
    pub frames: usize,
    pub max_abs_normal_n: f64,
    /// Fraction of frames with |normal| below the ramp limit.
    pub fraction_below_ramp_limit: f64,
    /// Frames whose filtered pressure is within 1 % of its peak.
    pub steady_frames: usize,
    /// Largest |normal| over the steady frames, N.
    pub steady_max_abs_normal_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoupleEvalRow {
    pub name: String,
    pub decoupled: ResidualStats,
    pub raw: ResidualStats,
}

/// Per-frame traces behind a [`DecoupleEvalRow`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecoupleTraces {
    pub times: Vec<f64>,
    pub pressure: Vec<f64>,
    pub normal_raw: Vec<Option<f64>>,
    pub normal_decoupled: Vec<Option<f64>>,
}

impl DecoupleTraces {
    pub fn table(&self) -> Table {
        let opt = |v: &Option<f64>| v.map(|x| fmt_f(x, 6)).unwrap_or_default();
        let mut t = Table::new(["t", "pressure", "normal_raw", "normal_decoupled"]);
        for i in 0..self.times.len() {
            t.push([
                fmt_f(self.times[i], 4),
                fmt_f(self.pressure[i], 6),
                opt(&self.normal_raw[i]),
                opt(&self.normal_decoupled[i]),
            ]);
        }
        t
    }
}

fn residual_stats(outputs: &[Option<MultiTaskOutput>], filtered_pressure: &[f64]) -> ResidualStats {
    let forces: Vec<(usize, f64)> =
        outputs.iter().enumerate().filter_map(|(i, o)| o.as_ref().map(|o| (i, o.normal_n.abs()))).collect();
    let peak = filtered_pressure.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let steady: Vec<f64> = forces.iter().filter(|(i, _)| filtered_pressure[*i] >= 0.99 * peak).map(|&(_, f)| f).collect();
    let n = forces.len();
    ResidualStats {
        frames: n,
        max_abs_normal_n: forces.iter().map(|&(_, f)| f).fold(0.0, f64::max),
        fraction_below_ramp_limit: if n > 0 {
            forces.iter().filter(|(_, f)| *f < RAMP_LIMIT_N).count() as f64 / n as f64
        } else {
            0.0
        },
        steady_frames: steady.len(),
        steady_max_abs_normal_n: steady.iter().copied().fold(0.0, f64::max),
    }
}

/// Runs inference on a record with and without the decoupler.
pub fn evaluate_decoupling(
    name: &str,
    record: &TimeSeriesRecord,
    decoupler: &DecouplerModel,
    tactile: &TactileModel,
    filter: &FilterSpec,
) -> Result<(DecoupleEvalRow, DecoupleTraces), HarnessError> {
    let sos = design_cheby1(&FilterSpec { sample_rate_hz: record.sample_rate(), ..*filter })?;
    let pressure = filter_signal(&record.pressures(), &sos);
    let with = decoupled_inference(record, Some(decoupler), tactile, filter)?;
    let without = decoupled_inference(record, None, tactile, filter)?;
    let row = DecoupleEvalRow {
        name: name.to_string(),
        decoupled: residual_stats(&with, &pressure),
        raw: residual_stats(&without, &pressure),
    };
    let traces = DecoupleTraces {
        times: record.times(),
        pressure,
        normal_raw: without.iter().map(|o| o.as_ref().map(|o| o.normal_n)).collect(),
        normal_decoupled: with.iter().map(|o| o.as_ref().map(|o| o.normal_n)).collect(),
    };
    Ok((row, traces))
}

/// No-contact ramp (0 → 35 → 0 kPa) and step (35 kPa) records of the first actuator.
pub fn decouple_eval_records(
    config: &ProjectConfig,
    seeds: &SeedTree,
) -> Result<Vec<(String, TimeSeriesRecord)>, HarnessError> {
    let rate = config.sweep.sample_rate;
    let peak = config.sweep.peak_kpa;
    let ramp = PressureProfile::ramp(peak, 10.0, 2.0, 10.0, rate)?;
    let step = PressureProfile::step(peak, 1.0, 8.0, 3.0, rate)?;
    Ok(vec![
        ("ramp".into(), simulate_free_actuation(&ramp, &config.actuator, seeds.derive("eval/ramp"))?),
        ("step".into(), simulate_free_actuation(&step, &config.actuator, seeds.derive("eval/step"))?),
    ])
}
