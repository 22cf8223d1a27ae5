use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use equilibria_cli::ScenarioConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_equilibria"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const MINIMAL: &str = r#"
[market]
assets = 1
covariance = [[0.04]]
cost = [0.1]
discount_rate = 0.0
horizon = 1.0
steps = 400

[[investors]]
tolerance = 1.0
exposure = { kind = "constant", value = [1.0] }

[[investors]]
tolerance = 1.0
exposure = { kind = "constant", value = [-0.5] }

[noise]
kind = "tapered"
shapes = [[{ poly = [0.5] }]]

[run]
regimes = ["frictionless_competitive", "frictionless_nash", "frictional_nash", "frictional_nash_two_investor"]
"#;

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn template_prints_and_parses() {
    let out = run(&["print-config-template"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = ScenarioConfig::parse(&text).unwrap();
    assert_eq!(cfg.to_toml(), text);
}

#[test]
fn minimal_config_runs_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MINIMAL);
    let out_dir = tmp.path().join("out");
    let started = Instant::now();
    let out = run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(started.elapsed().as_secs_f64() < 5.0);
    let s = summary(&out_dir);
    assert!(s["max_clearing_violation"].as_f64().unwrap() < 1e-10);
    assert_eq!(s["friction_premium"]["coefficient"].as_f64().unwrap(), 1.0);
    assert!(out_dir.join("rate_frictional_nash_two_investor_1.csv").exists());
}

#[test]
fn no_noise_nash_matches_competitive() {
    let tmp = tempfile::tempdir().unwrap();
    let text = MINIMAL
        .replace("kind = \"tapered\"\nshapes = [[{ poly = [0.5] }]]", "kind = \"none\"")
        .replace(
            "\"frictionless_nash\", \"frictional_nash\", \"frictional_nash_two_investor\"",
            "\"frictional_nash\"",
        );
    let cfg = write(tmp.path(), "c.toml", &text);
    let out_dir = tmp.path().join("out");
    let out = run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary(&out_dir)["max_regime_return_gap"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn malformed_covariance_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &MINIMAL.replace("[[0.04]]", "[[-0.04]]"));
    let out_dir = tmp.path().join("out");
    let out = run(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(11));
    assert!(!out_dir.exists());
}

#[test]
fn parse_errors_have_their_own_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", "[market\n");
    let out = run(&["run", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(10));
    let missing = run(&["run", "--config", "/nonexistent/c.toml", "--out", "/tmp/x"]);
    assert_eq!(missing.status.code(), Some(12));
}

#[test]
fn bad_sweep_value_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MINIMAL);
    let out = run(&[
        "sweep", "--config", &cfg, "--parameter", "lambda-scale", "--values", "1,0",
        "--out", tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(14));
}

#[test]
fn sweep_writes_csv_and_slopes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MINIMAL);
    let out_dir = tmp.path().join("o");
    let out = run(&[
        "sweep", "--config", &cfg, "--parameter", "lambda-scale", "--values", "1,0.1,0.01",
        "--grid-steps", "50", "--out", out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep_lambda_scale.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep_lambda_scale.json")).unwrap()).unwrap();
    assert!((json["slopes"]["friction_premium"].as_f64().unwrap() - 1.0).abs() < 0.01);
}

#[test]
fn environment_overrides_grid_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", MINIMAL);
    let out_dir = tmp.path().join("o");
    let out = bin()
        .args(["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .env("EQUILIBRIA_GRID_STEPS", "25")
        .env("EQUILIBRIA_SEED", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = summary(&out_dir);
    assert_eq!(s["steps"], 25);
    assert_eq!(s["seed"], 3);
}

#[test]
fn oracle_check_passes_on_template() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", &ScenarioConfig::template().to_toml());
    let out = run(&["oracle-check", "--config", &cfg, "--grid-steps", "100", "--battery", "6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn stochastic_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace(
        "exposure = { kind = \"constant\", value = [-0.5] }",
        "exposure = { kind = \"ou\", initial = [0.2], mean = [0.0], reversion = 1.0, scale = [[0.5]] }",
    ) + "seed = 11\nmc_paths = 8\n";
    let cfg = write(tmp.path(), "c.toml", &text);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = run(&["run", "--config", &cfg, "--grid-steps", "60", "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 10);
    for name in names {
        assert_eq!(fs::read(dirs[0].join(&name)).unwrap(), fs::read(dirs[1].join(&name)).unwrap());
    }
    let s = summary(&dirs[0]);
    assert_eq!(s["deterministic"], false);
    assert!(s["regimes"][0]["surplus_standard_error"][0].as_f64().unwrap() > 0.0);
}
