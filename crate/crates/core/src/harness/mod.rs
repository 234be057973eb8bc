//! Configuration-driven commands, run manifests and the verification suite.
//!
//! Every command validates its configuration first, derives all randomness
//! from the root seed through named streams and writes its artifacts plus a
//! `manifest.json` under `output_dir/<command>/`.

mod commands;
mod pipeline;
mod verify;

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuator::{ActuatorError, RecordError, TimeSeriesRecord};
use crate::analysis::AnalysisError;
use crate::config::{ConfigError, ProjectConfig};
use crate::decoupler::DecouplerError;
use crate::firmness::FirmnessError;
use crate::magnetics::MagneticsError;
use crate::neural::NeuralError;
use crate::par::Execution;
use crate::seed::SeedTree;
use crate::sigproc::SigprocError;
use crate::tactile::TactileError;

pub use commands::{
    cmd_decouple_eval, cmd_firmness, cmd_simulate, cmd_train, cmd_verify, read_artifact, DecoupleEvalArgs, Experiment,
    Scenario, TrainArgs, TrainTarget,
};
pub use pipeline::{
    build_models, calibrate_gripper, decouple_eval_records, decoupler_config, evaluate_decoupling, gripper,
    individual_report, load_grid_dir, object_comparison, progressive_report, simulate_training_grid, tactile_config,
    train_actuator_decoupler, train_tactile, DecoupleEvalRow, IndividualReport, Models, ObjectComparison,
    DecoupleTraces, ProgressiveReport, ResidualStats, Timings, RAMP_LIMIT_N, STEP_LIMIT_N,
};
pub use verify::{
    check_blocking_force, check_decoupling_ramp, check_decoupling_step, check_dynamics, check_filter,
    check_firmness_ordering, check_gradients, check_physics, check_progressive, check_statistics, check_training,
    run_suite, CriterionResult, SuiteOptions, VerifyReport, REFERENCE_ROWS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("input not found: {0}")]
    MissingInput(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Decoupler(#[from] DecouplerError),
    #[error(transparent)]
    Tactile(#[from] TactileError),
    #[error(transparent)]
    Firmness(#[from] FirmnessError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
    #[error(transparent)]
    Sigproc(#[from] SigprocError),
}

impl HarnessError {
    /// 2 for usage, configuration and missing-input errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Usage(_) | HarnessError::MissingInput(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// Format for reports and tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl FromStr for OutputFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(HarnessError::Usage(format!("unknown format `{other}`, expected csv or json"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Plain rectangular table rendered as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_io = |e: csv::Error| HarnessError::Record(RecordError::Csv(e));
        w.write_record(&self.headers).map_err(to_io)?;
        for r in &self.rows {
            w.write_record(r).map_err(to_io)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Usage(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }
}

/// Reports that can be written as JSON or as one or more CSV tables.
pub trait Report: Serialize {
    fn tables(&self) -> Vec<(String, Table)>;
}

/// Record of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Paths relative to the command directory, in write order.
    pub artifacts: Vec<PathBuf>,
    pub duration_s: f64,
}

/// Execution context shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ProjectConfig,
    pub format: OutputFormat,
    pub exec: Execution,
}

impl Context {
    pub fn new(config: ProjectConfig, format: OutputFormat, exec: Execution) -> Result<Self, HarnessError> {
        config.validate()?;
        Ok(Self { config, format, exec })
    }

    pub fn seeds(&self) -> SeedTree {
        SeedTree::new(self.config.seed)
    }
}

/// Single-owner writer for one command's output directory.
pub struct Outputs {
    command: String,
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl Outputs {
    pub fn create(ctx: &Context, command: &str) -> Result<Self, HarnessError> {
        let dir = ctx.config.output_dir.join(command);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { command: command.to_string(), dir, artifacts: Vec::new(), started: Instant::now() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Registers `name` as an artifact and returns its path for a writer that owns the file.
    pub fn reserve(&mut self, name: &str) -> Result<PathBuf, HarnessError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        self.artifacts.push(PathBuf::from(name));
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
        let path = self.reserve(name)?;
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, HarnessError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_record(
        &mut self,
        name: &str,
        record: &TimeSeriesRecord,
        extra: Option<(&str, &[i64])>,
    ) -> Result<PathBuf, HarnessError> {
        let path = self.reserve(name)?;
        let file = File::create(&path).map_err(io_err(&path))?;
        record.write_csv(BufWriter::new(file), extra)?;
        Ok(path)
    }

    /// Writes `report` as `<stem>.json`, or one `<stem>_<table>.csv` per table.
    pub fn write_report<R: Report>(
        &mut self,
        stem: &str,
        report: &R,
        format: OutputFormat,
    ) -> Result<Vec<PathBuf>, HarnessError> {
        match format {
            OutputFormat::Json => Ok(vec![self.write_json(&format!("{stem}.json"), report)?]),
            OutputFormat::Csv => report
                .tables()
                .into_iter()
                .map(|(name, t)| {
                    let file = if name.is_empty() { format!("{stem}.csv") } else { format!("{stem}_{name}.csv") };
                    self.write_text(&file, &t.to_csv()?)
                })
                .collect(),
        }
    }

    pub fn with_file<F>(&mut self, name: &str, f: F) -> Result<PathBuf, HarnessError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), HarnessError>,
    {
        let path = self.reserve(name)?;
        let file = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(io_err(&path))?;
        Ok(path)
    }

    /// Writes `manifest.json` and returns the manifest.
    pub fn finish(self, ctx: &Context) -> Result<RunManifest, HarnessError> {
        let manifest = RunManifest {
            command: self.command,
            config_hash: ctx.config.hash(),
            seed: ctx.config.seed,
            artifacts: self.artifacts,
            duration_s: self.started.elapsed().as_secs_f64(),
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
        Ok(manifest)
    }
}

/// Fixed-precision float rendering for deterministic text.
pub(crate) fn fmt_f(x: f64, digits: usize) -> String {
    let s = format!("{x:.digits$}");
    match s.strip_prefix('-') {
        // Values that round to zero print without a sign.
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}
