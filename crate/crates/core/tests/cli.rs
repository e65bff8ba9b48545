//! End-to-end runs of the installed binary: each subcommand against real
//! files in a scratch directory, checking exit codes and output contracts.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use aelab::optimizer::TrainHistory;
use aelab::sweep::TABLE_HEADER;
use aelab::verify::CheckReport;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aelab"))
        .args(args)
        .output()
        .expect("spawn aelab")
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aelab_cli_{tag}_{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

const TINY_SWEEP: &str = r#"
models = ["ae", "dae"]
activations = ["sigmoid"]
sigma2_grid = [0.0, 0.25]
hidden_units = 8
epochs = 2
batch_size = 25
learning_rate = 0.003
momentum = 0.9
constraint = "unit_norm"
seed = 3

[dataset]
kind = "synth_dict"
num = 200
n = 16
atoms = 8
k_active = 2
"#;

#[test]
fn sweep_prints_the_table_it_writes() {
    let dir = scratch("sweep");
    let config = dir.join("tiny.toml");
    fs::write(&config, TINY_SWEEP).unwrap();
    let out_dir = dir.join("out");

    let out = run(&[
        "sweep",
        config.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some(TABLE_HEADER));
    assert_eq!(lines.count(), 4, "one row per cell");

    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv, stdout, "stdout table and sweep.csv are the same bytes");

    for name in [
        "history_ae_sigmoid_0.json",
        "history_ae_sigmoid_0.25.json",
        "history_dae_sigmoid_0.json",
        "history_dae_sigmoid_0.25.json",
    ] {
        let text = fs::read_to_string(out_dir.join(name)).unwrap();
        let history = TrainHistory::from_json(&text).unwrap();
        assert_eq!(history.records.len(), 2);
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_is_deterministic_across_invocations() {
    let dir = scratch("det");
    let config = dir.join("tiny.toml");
    fs::write(&config, TINY_SWEEP).unwrap();
    let args = ["sweep", config.to_str().unwrap(), "--output-dir"];
    let first = run(&[&args[..], &[dir.join("a").to_str().unwrap()]].concat());
    let second = run(&[&args[..], &[dir.join("b").to_str().unwrap()]].concat());
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_then_inspect_round_trip() {
    let dir = scratch("train");
    let config = dir.join("cell.toml");
    fs::write(
        &config,
        TINY_SWEEP
            .replace(r#"models = ["ae", "dae"]"#, r#"models = ["cae"]"#)
            .replace("sigma2_grid = [0.0, 0.25]", "sigma2_grid = [0.5]"),
    )
    .unwrap();
    let history_path = dir.join("cell_history.json");

    let out = run(&[
        "train",
        config.to_str().unwrap(),
        "--output",
        history_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cae sigmoid sigma2=0.5 done:"), "{stdout}");

    let history = TrainHistory::from_json(&fs::read_to_string(&history_path).unwrap()).unwrap();
    assert_eq!(history.config.epochs, 2);

    let out = run(&["inspect", history_path.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("objective cae (coeff 0.5), activation sigmoid"));
    // two header lines, the column line, one row per epoch
    assert_eq!(stdout.lines().count(), 3 + 2);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn train_rejects_grids() {
    let dir = scratch("grids");
    let config = dir.join("grid.toml");
    fs::write(&config, TINY_SWEEP).unwrap();
    let out = run(&["train", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("error:"), "{stderr}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn missing_config_is_a_plain_error() {
    let out = run(&["sweep", "/nonexistent/nowhere.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error:"));
}

#[test]
fn verify_quick_emits_parseable_reports() {
    let out = run(&["verify", "--scale", "quick", "--seed", "11"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let reports: Vec<CheckReport> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(reports.len() >= 20, "suite shrank to {}", reports.len());
    assert!(reports.iter().all(|r| r.passed));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(
        stderr.contains(&format!("{}/{} checks passed", reports.len(), reports.len())),
        "{stderr}"
    );
}

#[test]
fn verify_rejects_unknown_scale() {
    let out = run(&["verify", "--scale", "mega"]);
    assert_eq!(out.status.code(), Some(2));
}
