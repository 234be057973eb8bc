use std::path::{Path, PathBuf};

use softmag::actuator::TimeSeriesRecord;
use softmag::config::ProjectConfig;
use softmag::decoupler::DecouplerModel;
use softmag::harness::*;
use softmag::par::Execution;
use tempfile::TempDir;

fn context(dir: &Path, edit: impl FnOnce(&mut ProjectConfig)) -> Context {
    let mut config = ProjectConfig { output_dir: dir.to_path_buf(), ..ProjectConfig::default() };
    edit(&mut config);
    Context::new(config, OutputFormat::Json, Execution::default()).unwrap()
}

fn read(path: PathBuf) -> Vec<u8> {
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn scenario_names_parse() {
    assert_eq!("indentation-grid".parse::<Scenario>().unwrap(), Scenario::IndentationGrid);
    assert_eq!("three-objects".parse::<Experiment>().unwrap(), Experiment::ThreeObjects);
    assert_eq!("tactile".parse::<TrainTarget>().unwrap(), TrainTarget::Tactile);
    let err = "orbit".parse::<Scenario>().unwrap_err();
    assert_eq!(err.exit_code(), EXIT_USAGE);
}

#[test]
fn simulate_writes_records_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    let ctx = context(dir.path(), |_| {});
    let m = cmd_simulate(&ctx, Scenario::Blocked).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.artifacts, vec![PathBuf::from("blocked.csv")]);
    assert_eq!(m.config_hash, ctx.config.hash());
    let (rec, extra) = TimeSeriesRecord::read_csv_file(&dir.path().join("simulate/blocked.csv")).unwrap();
    assert!(extra.is_none());
    let f = *rec.normal_forces().last().unwrap();
    assert!((f - 1.4).abs() <= 0.2, "quasi-static blocked force {f}");
    let manifest: serde_json::Value = serde_json::from_slice(&read(dir.path().join("simulate/manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn step_metrics_report_settling() {
    let dir = TempDir::new().unwrap();
    let ctx = context(dir.path(), |_| {});
    cmd_simulate(&ctx, Scenario::Step).unwrap();
    let metrics: serde_json::Value = serde_json::from_slice(&read(dir.path().join("simulate/step_metrics.json"))).unwrap();
    let settle = metrics["settling_time"].as_f64().unwrap();
    assert!((settle - 1.5).abs() <= 0.3, "{settle}");
}

#[test]
fn same_seed_same_bytes_and_seed_changes_them() {
    let run = |seed: u64| {
        let dir = TempDir::new().unwrap();
        let ctx = context(dir.path(), |c| c.seed = seed);
        cmd_simulate(&ctx, Scenario::Free).unwrap();
        read(dir.path().join("simulate/free.csv"))
    };
    assert_eq!(run(4), run(4));
    assert_ne!(run(4), run(5));
}

#[test]
fn decoupler_trains_from_a_recorded_sweep() {
    let dir = TempDir::new().unwrap();
    let ctx = context(dir.path(), |c| c.decoupler.train.max_epochs = 5);
    cmd_simulate(&ctx, Scenario::Free).unwrap();
    let args = TrainArgs {
        target: TrainTarget::Decoupler,
        data: Some(dir.path().join("simulate/free.csv")),
        decoupler: None,
        actuator: 1,
    };
    let (m, line) = cmd_train(&ctx, &args).unwrap();
    assert!(line.starts_with("decoupler A2"), "{line}");
    assert_eq!(m.artifacts, vec![PathBuf::from("decoupler_A2.json"), PathBuf::from("decoupler_A2_metrics.json")]);
    let model = DecouplerModel::load(dir.path().join("train/decoupler_A2.json")).unwrap();
    assert_eq!(model.actuator_id(), Some("A2"));
    assert!(model.is_trained());
}

#[test]
fn missing_inputs_map_to_the_usage_exit_code() {
    let dir = TempDir::new().unwrap();
    let ctx = context(dir.path(), |_| {});
    let nowhere = dir.path().join("nowhere");
    let args = TrainArgs { target: TrainTarget::Tactile, data: Some(nowhere.clone()), decoupler: None, actuator: 0 };
    let err = cmd_train(&ctx, &args).unwrap_err();
    assert!(matches!(&err, HarnessError::MissingInput(p) if *p == nowhere), "{err}");
    assert_eq!(err.exit_code(), EXIT_USAGE);

    let empty = TempDir::new().unwrap();
    let err = cmd_firmness(&ctx, Experiment::Individual, Some(empty.path())).unwrap_err();
    assert!(matches!(err, HarnessError::MissingInput(_)), "{err}");
    let err = read_artifact(&nowhere).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_USAGE);

    let args = TrainArgs { target: TrainTarget::Decoupler, data: None, decoupler: None, actuator: 2 };
    assert!(matches!(cmd_train(&ctx, &args), Err(HarnessError::Usage(_))));
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut config = ProjectConfig::default();
    config.firmness.params.b = -1.0;
    let err = Context::new(config, OutputFormat::Csv, Execution::Sequential).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_USAGE);
}

#[test]
fn grid_directory_loading_reports_the_first_missing_file() {
    let dir = TempDir::new().unwrap();
    let err = load_grid_dir(dir.path(), &ProjectConfig::default()).unwrap_err();
    match err {
        HarnessError::MissingInput(p) => assert!(p.starts_with(dir.path())),
        other => panic!("{other}"),
    }
}

#[test]
fn statistics_check_is_fast_and_reports_every_row() {
    let r = check_statistics();
    assert_eq!(r.id, 1);
    assert!(r.detail.contains(&format!("over {} rows", REFERENCE_ROWS.len())));
    assert!(r.line().starts_with(if r.passed { "PASS criterion  1" } else { "FAIL criterion  1" }));
}
