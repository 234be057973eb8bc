use std::path::Path;
use std::process::{Command, Output};

fn softmag(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softmag"))
        .current_dir(dir)
        .env_remove("SOFTMAG_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_lists_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = softmag(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    for cmd in ["simulate", "train", "decouple-eval", "firmness", "verify"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(softmag(dir.path(), &["levitate"]).status.code(), Some(2));
    assert_eq!(softmag(dir.path(), &["simulate", "orbit"]).status.code(), Some(2));
    let o = softmag(dir.path(), &["train", "tactile", "--data", "no/such/dir"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/dir"));
}

#[test]
fn bad_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_softmag"))
        .current_dir(dir.path())
        .env("SOFTMAG_FIRMNESS__PARAMS__B", "-1")
        .args(["simulate", "step"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "sede = 3\n").unwrap();
    assert_eq!(softmag(dir.path(), &["--config", "bad.toml", "simulate", "step"]).status.code(), Some(2));
}

#[test]
fn simulate_step_writes_under_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = softmag(dir.path(), &["--out", "runs", "--seed", "3", "simulate", "step"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2 artifacts written"), "{}", stdout(&o));
    for f in ["step.csv", "step_metrics.json", "manifest.json"] {
        assert!(dir.path().join("runs/simulate").join(f).is_file(), "{f}");
    }
    let manifest = std::fs::read_to_string(dir.path().join("runs/simulate/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3"), "{manifest}");
}

#[test]
fn sequential_flag_gives_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["--out", out];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["simulate", "free"]);
        assert_eq!(softmag(dir.path(), &args).status.code(), Some(0));
        std::fs::read(dir.path().join(out).join("simulate/free.csv")).unwrap()
    };
    assert_eq!(run("a", &[]), run("b", &["--sequential"]));
}
