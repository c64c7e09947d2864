//! End-to-end checks of the command-line surface: exit codes, JSON and CSV
//! shapes, determinism, and the analyze-output round trip.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_switchcrn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

static DIR_COUNTER: AtomicU64 = AtomicU64::new(0);

fn scratch_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "switchcrn-cli-{tag}-{}-{}",
        std::process::id(),
        DIR_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

const CROSS_PAIR: &str = "\
species S1 S2
environment 1
S1 -> 0 @ 0.95
0 -> S1 @ 1
S1 -> 4 S2 @ 0.05
S2 -> 0 @ 0.05
0 -> S2 @ 1
S2 -> 4 S1 @ 0.95
environment 2
S1 -> 0 @ 0.05
0 -> S1 @ 1
S1 -> 4 S2 @ 0.95
S2 -> 0 @ 0.95
0 -> S2 @ 1
S2 -> 4 S1 @ 0.05
switching
q 1 2 1
q 2 1 1
";

#[test]
fn classify_reports_both_regimes() {
    let dir = scratch_dir("classify");
    let path = dir.join("pair.crn");
    fs::write(&path, CROSS_PAIR).unwrap();
    let out = run(&["classify", path.to_str().unwrap()]);
    assert!(out.status.success());
    let verdict: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(verdict["fast"]["conclusion"], "evanescent_eventually");
    assert_eq!(verdict["slow"]["conclusion"], "ergodic_eventually");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn analyze_output_reingests_with_identical_classification() {
    let dir = scratch_dir("analyze");
    let path = dir.join("pair.crn");
    fs::write(&path, CROSS_PAIR).unwrap();
    let analyzed = run(&["analyze", path.to_str().unwrap()]);
    assert!(analyzed.status.success());
    let json_path = dir.join("pair.json");
    fs::write(&json_path, stdout(&analyzed)).unwrap();

    let direct = run(&["classify", path.to_str().unwrap()]);
    let reingested = run(&["classify", json_path.to_str().unwrap()]);
    assert!(reingested.status.success());
    assert_eq!(stdout(&direct), stdout(&reingested));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn sweep_csv_is_deterministic_with_expected_shape() {
    let dir = scratch_dir("sweep");
    let path = dir.join("pair.crn");
    fs::write(&path, CROSS_PAIR).unwrap();
    let args = [
        "sweep",
        path.to_str().unwrap(),
        "--kappa",
        "log:1e-2:1e2:5",
        "--trials",
        "20",
        "--seed",
        "7",
        "--t-max",
        "20",
        "--escape-norm",
        "200",
    ];
    let first = run(&args);
    assert!(first.status.success());
    let second = run(&args);
    assert_eq!(
        stdout(&first),
        stdout(&second),
        "sweep must be reproducible"
    );

    let text = stdout(&first);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "kappa,escape_fraction,wilson_low,wilson_high,mean_final_l1,n_traj,n_event_capped"
    );
    assert_eq!(lines.count(), 5);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn generator_evaluates_power_form() {
    let out = run(&[
        "generator",
        "gallery:ex4.7",
        "--kappa",
        "3",
        "--lyapunov",
        "power:1:90;57",
        "--state",
        "7",
        "--env",
        "1",
    ]);
    assert!(out.status.success());
    let value: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    // Closed form 90 - 9x at x = 7.
    assert!((value["value"].as_f64().unwrap() - 27.0).abs() < 1e-9);
}

#[test]
fn drift_checks_run_from_the_registry() {
    let out = run(&["drift", "gallery:ex4.1", "--check", "fast-ergodic"]);
    assert!(out.status.success());
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(result["kappa_threshold"].as_f64().unwrap() > 0.0);

    let out = run(&["drift", "gallery:ex4.1", "--check", "slow-transience"]);
    assert!(out.status.success());
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(result["report"]["algebraic_pass"], true);

    // Inapplicable check: the destructive pair's environments are unstable.
    let out = run(&["drift", "gallery:ex4.1", "--check", "slow-ergodic"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gallery_list_enumerates_entries() {
    let out = run(&["gallery-list", "--format", "json"]);
    assert!(out.status.success());
    let entries: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(entries.as_array().unwrap().len() >= 11);
}

#[test]
fn reproduce_writes_artifacts() {
    let dir = scratch_dir("reproduce");
    let out = run(&[
        "reproduce",
        "ex4.7",
        "--out-dir",
        dir.to_str().unwrap(),
        "--trials",
        "10",
        "--seed",
        "5",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "model.crn",
        "model.json",
        "verdict.json",
        "drift.json",
        "sweep.csv",
    ] {
        assert!(dir.join(name).exists(), "missing {name}");
    }
    let verdict: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["fast"]["conclusion"], "ergodic_eventually");
    fs::remove_dir_all(dir).ok();
}

#[test]
fn exit_codes_distinguish_usage_and_validation() {
    // Unknown flag: usage error.
    let out = run(&["classify", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));

    // Unreadable file: usage-level error.
    let out = run(&["classify", "/nonexistent/model.crn"]);
    assert_eq!(out.status.code(), Some(1));

    // Syntactically invalid model: validation error.
    let dir = scratch_dir("exitcodes");
    let bad = dir.join("bad.crn");
    fs::write(&bad, "species S1\nenvironment 1\nS1 -> S1 @ 1\n").unwrap();
    let out = run(&["classify", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    // Q with a bad row sum in JSON: validation error.
    let bad_json = dir.join("bad.json");
    fs::write(
        &bad_json,
        r#"{"species":["A"],"environments":[{"reactions":[]},{"reactions":[]}],"q":[[-1.0,1.5],[1.0,-1.0]]}"#,
    )
    .unwrap();
    let out = run(&["classify", bad_json.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    fs::remove_dir_all(dir).ok();
}
