use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scalarbound"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const FORCED_WEAK: &str = r#"
name = "weak"
dimension = 2

[horizon]
t_end = 2.0
step = 0.01
output_stride = 0.25

[system]
a = [["-2", "0"], ["0", "-2"]]

[[system.terms]]
component = 1
coefficient = "0.2"
factors = [{ slot = 1, component = 1, exponent = 2 }]

[delays]
channels = ["0.4 + 0.1*sin(t)"]
h_bar = 0.5
h_floor = 0.3

[forcing]
f0 = 0.5
envelope = ["0.5*cos(t)", "0"]

[history]
expressions = ["0.3", "0.2*cos(t)"]
"#;

#[test]
fn simulate_writes_csv_and_report() {
    let dir = TempDir::new().unwrap();
    let out = run(&["simulate", "--scenario", "sec5_case_a", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "trajectory.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,norm_x,y,yhat,u"));
    assert_eq!(lines.count(), 201);
    let report = read(dir.path(), "report.txt");
    assert!(report.contains("chain.norm_x<=y.violations = 0"));
    assert!(report.contains("status = pass"));
    assert!(dir.path().join("config.toml").exists());
}

#[test]
fn overrides_change_row_count() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "--scenario",
        "sec5_case_b",
        "--horizon",
        "3",
        "--step",
        "0.005",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    // 1 + floor(3 / 0.1)
    assert_eq!(read(dir.path(), "trajectory.csv").lines().count(), 1 + 31);
    assert!(read(dir.path(), "config.toml").contains("step = 0.005"));
}

#[test]
fn weak_envelope_warns_and_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("weak.toml");
    fs::write(&cfg, FORCED_WEAK).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: forcing.envelope"));
    let csv = read(&out_dir, "trajectory.csv");
    assert_eq!(csv.lines().next(), Some("t,norm_x,y,yhat"));
    assert_eq!(csv.lines().count(), 1 + 9);
}

#[test]
fn invalid_config_lists_every_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = FORCED_WEAK
        .replace("h_floor = 0.3", "h_floor = 0.7")
        .replace("\"-2\", \"0\"]", "\"-2 *\", \"0\"]")
        .replace("[history]", "[history]\nextra = 1");
    fs::write(&cfg, text).unwrap();
    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("delays.h_floor"), "{err}");
    assert!(err.contains("system.a[0][0]"), "{err}");
    assert!(err.contains("history.extra"), "{err}");
}

#[test]
fn validate_echoes_resolved_config() {
    let out = run(&["validate", "--scenario", "sec5_case_b"]);
    assert_eq!(code(&out), 0);
    let echo = String::from_utf8_lossy(&out.stdout);
    assert!(echo.contains("angle_step = 0.031415926535897934"), "{echo}");
    assert!(echo.contains("divergence_factor = 1000.0"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&["simulate"])), 2);
    assert_eq!(code(&run(&["simulate", "--scenario", "nope"])), 2);
    assert_eq!(code(&run(&["verify", "--scenario", "appendix_b", "--suite", "nope"])), 2);
    assert_eq!(code(&run(&["simulate", "--scenario", "sec5_case_a", "--step", "0.3"])), 2);
}

#[test]
fn verify_suites() {
    let dir = TempDir::new().unwrap();
    for (scenario, suite) in [("appendix_b", "dominance"), ("sec5_case_a", "comparison"), ("sec5_case_a", "robust")] {
        let out_dir = dir.path().join(suite);
        let out = run(&[
            "verify",
            "--scenario",
            scenario,
            "--suite",
            suite,
            "--horizon",
            "4",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{suite}: {}", String::from_utf8_lossy(&out.stdout));
        assert!(read(&out_dir, "report.txt").contains("status = pass"));
    }
    let robust = read(&dir.path().join("robust"), "report.txt");
    assert!(robust.contains("identical_to_unperturbed = true"));
}

#[test]
fn seed_override_reaches_report() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "verify",
        "--scenario",
        "sec5_case_a",
        "--suite",
        "comparison",
        "--seed",
        "11",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(read(dir.path(), "report.txt").contains("seed = 11"));
    assert_eq!(read(dir.path(), "violations.csv"), "instance,t,lower,upper\n");
}

#[test]
fn region_on_cubic() {
    let dir = TempDir::new().unwrap();
    let out = run(&["region", "--scenario", "oracle_cubic", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let csv = read(dir.path(), "region_nonautonomous.csv");
    assert_eq!(csv.lines().next(), Some("theta,r,ln_r"));
    let r: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((r - 1.0).abs() < 0.02, "{r}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        let out = run(&["simulate", "--scenario", "appendix_b", "--out", dir.path().to_str().unwrap()]);
        assert_eq!(code(&out), 0);
    }
    for name in ["trajectory.csv", "report.txt", "violations.csv", "config.toml"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn list_names_scenarios() {
    let out = run(&["list"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["sec5_case_a", "sec5_case_b", "oracle_delay_linear"] {
        assert!(text.contains(name));
    }
}
