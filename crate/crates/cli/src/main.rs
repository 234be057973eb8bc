use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use softmag::config::{env_overrides, ProjectConfig};
use softmag::harness::{
    cmd_decouple_eval, cmd_firmness, cmd_simulate, cmd_train, cmd_verify, Context, DecoupleEvalArgs, Experiment,
    HarnessError, OutputFormat, RunManifest, Scenario, TrainArgs, TrainTarget, EXIT_FAILURE, EXIT_OK,
};
use softmag::par::Execution;

/// Simulation, training and firmness experiments for a magnetic tactile soft gripper.
///
/// Settings come from the TOML file given by --config, then SOFTMAG_* environment
/// variables (SOFTMAG_TACTILE__TRAIN__MAX_EPOCHS=50 sets tactile.train.max_epochs),
/// then the flags below.
#[derive(Debug, Parser)]
#[command(name = "softmag", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; each command writes into a subdirectory named after itself.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate an actuation scenario and write its records.
    Simulate {
        #[arg(value_enum)]
        scenario: ScenarioArg,
    },
    /// Train the decoupler or the multi-task tactile model.
    Train {
        #[arg(value_enum)]
        target: TargetArg,
        /// Staircase record for the decoupler, or grid directory for the tactile model.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Trained decoupler applied before windowing the tactile data.
        #[arg(long)]
        decoupler: Option<PathBuf>,
        /// Actuator whose decoupler is trained (0 or 1).
        #[arg(long, default_value_t = 0)]
        actuator: usize,
    },
    /// Compare predicted force with and without decoupling on no-contact records.
    DecoupleEval {
        /// Record to evaluate instead of the built-in ramp and step.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Directory holding decoupler_A1.json, decoupler_A2.json and tactile.json.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Run a firmness experiment.
    Firmness {
        #[arg(value_enum)]
        experiment: ExperimentArg,
        /// Directory holding decoupler_A1.json, decoupler_A2.json and tactile.json.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Run the acceptance suite; exits 1 if any criterion fails.
    Verify {
        /// Run the suite twice and require byte-identical reports.
        #[arg(long)]
        self_check: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Free,
    Blocked,
    IndentationGrid,
    Step,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Decoupler,
    Tactile,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExperimentArg {
    ThreeObjects,
    Progressive,
    Individual,
}

fn context(cli: &Cli) -> Result<Context, HarnessError> {
    let mut overrides = env_overrides(std::env::vars());
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(out) = &cli.out {
        // Quoted so the override is always read as a string.
        overrides.push(("output_dir".into(), toml_string(&out.to_string_lossy())));
    }
    let config = ProjectConfig::load(cli.config.as_deref(), overrides)?;
    let format = match cli.format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let exec = if cli.sequential { Execution::Sequential } else { Execution::default() };
    Context::new(config, format, exec)
}

fn toml_string(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            c => vec![c],
        })
        .collect();
    format!("\"{escaped}\"")
}

fn report_manifest(m: &RunManifest) {
    println!("{} artifacts written, config {}", m.artifacts.len(), &m.config_hash[..12]);
}

fn run(cli: &Cli) -> Result<i32, HarnessError> {
    let ctx = context(cli)?;
    match &cli.command {
        Command::Simulate { scenario } => {
            let scenario = match scenario {
                ScenarioArg::Free => Scenario::Free,
                ScenarioArg::Blocked => Scenario::Blocked,
                ScenarioArg::IndentationGrid => Scenario::IndentationGrid,
                ScenarioArg::Step => Scenario::Step,
            };
            report_manifest(&cmd_simulate(&ctx, scenario)?);
        }
        Command::Train { target, data, decoupler, actuator } => {
            let target = match target {
                TargetArg::Decoupler => TrainTarget::Decoupler,
                TargetArg::Tactile => TrainTarget::Tactile,
            };
            let args = TrainArgs { target, data: data.clone(), decoupler: decoupler.clone(), actuator: *actuator };
            let (m, summary) = cmd_train(&ctx, &args)?;
            println!("{summary}");
            report_manifest(&m);
        }
        Command::DecoupleEval { record, models } => {
            let args = DecoupleEvalArgs { record: record.clone(), models: models.clone() };
            let (m, summary) = cmd_decouple_eval(&ctx, &args)?;
            println!("{summary}");
            report_manifest(&m);
        }
        Command::Firmness { experiment, models } => {
            let experiment = match experiment {
                ExperimentArg::ThreeObjects => Experiment::ThreeObjects,
                ExperimentArg::Progressive => Experiment::Progressive,
                ExperimentArg::Individual => Experiment::Individual,
            };
            let (m, summary) = cmd_firmness(&ctx, experiment, models.as_deref())?;
            println!("{summary}");
            report_manifest(&m);
        }
        Command::Verify { self_check } => {
            let (m, report) = cmd_verify(&ctx, *self_check)?;
            print!("{}", report.to_text());
            report_manifest(&m);
            if !report.passed() {
                return Ok(EXIT_FAILURE);
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
