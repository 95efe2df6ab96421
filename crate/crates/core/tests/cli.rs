use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pendulum_balance::io::{read_key_values, write_qtable};
use pendulum_balance::rl::{QTable, ACTIONS};

const BIN: &str = env!("CARGO_BIN_EXE_pendulum-balance");

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
        .unwrap_or_else(|| panic!("{key} missing from {text}"))
        .parse()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn oscillate_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let osc = run(&["oscillate", "--out", "trace.csv"], dir.path());
    assert_eq!(code(&osc), 0);
    assert!((value(&stdout(&osc), "natural_period_s") - 0.75).abs() < 0.01);
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.starts_with("t,theta_rad\n"));

    let fit = run(&["fit", "trace.csv", "--out", "fit.txt"], dir.path());
    assert_eq!(code(&fit), 0, "{}", String::from_utf8_lossy(&fit.stderr));
    let kv = read_key_values(&fs::read_to_string(dir.path().join("fit.txt")).unwrap()).unwrap();
    let get = |k: &str| kv.iter().find(|(key, _)| key == k).unwrap().1.clone();
    let i: f64 = get("I").parse().unwrap();
    let b: f64 = get("b").parse().unwrap();
    let truth = pendulum_balance::dynamics::PendulumParams::default();
    assert!((i / truth.inertia - 1.0).abs() < 0.01);
    assert!((b / truth.damping - 1.0).abs() < 0.01);
    assert_eq!(get("converged"), "true");
}

#[test]
fn undamped_oscillation_keeps_its_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["oscillate", "--set", "b=0", "--set", "theta0=0.3", "--out", "t.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let data = rows(&dir.path().join("t.csv"));
    let late_peak = data[data.len() - 200..]
        .iter()
        .map(|r| r[1].abs())
        .fold(0.0, f64::max);
    assert!((late_peak - 0.3).abs() < 1e-3, "{late_peak}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let out = run(&["oscillate", "--set", "noise_std=0.01", "--seed", "3", "--out", name], dir.path());
        assert_eq!(code(&out), 0);
    }
    assert_eq!(
        fs::read(dir.path().join("a.csv")).unwrap(),
        fs::read(dir.path().join("b.csv")).unwrap()
    );
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // validation
    assert_eq!(code(&run(&["--set", "duration=0", "oscillate"], d)), 3);
    assert_eq!(code(&run(&["--set", "alpha=0", "train", "--out", "q.csv"], d)), 3);

    // I/O
    assert_eq!(code(&run(&["fit", "missing.csv"], d)), 4);
    assert_eq!(code(&run(&["--config", "missing.cfg", "oscillate"], d)), 4);

    // parse
    fs::write(d.join("bad.cfg"), "episodes = 10\nepisdoes = 3\n").unwrap();
    assert_eq!(code(&run(&["--config", "bad.cfg", "oscillate"], d)), 5);
    fs::write(d.join("bad.csv"), "t,theta_rad\n0,0.1\n0.005,abc\n").unwrap();
    let out = run(&["fit", "bad.csv"], d);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // non-convergence, with the result still written
    assert_eq!(code(&run(&["oscillate", "--out", "trace.csv"], d)), 0);
    let out = run(&["fit", "trace.csv", "--set", "fit_max_iterations=5", "--out", "fit.txt"], d);
    assert_eq!(code(&out), 6);
    assert!(fs::read_to_string(d.join("fit.txt")).unwrap().contains("converged=false"));

    // shape
    let mut bytes = Vec::new();
    write_qtable(&mut bytes, &QTable::pendulum()).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    let truncated: String = text.lines().take(500).map(|l| format!("{l}\n")).collect();
    fs::write(d.join("short.csv"), truncated).unwrap();
    assert_eq!(code(&run(&["eval", "short.csv"], d)), 7);

    // usage
    assert_eq!(code(&run(&["train"], d)), 2);
    assert_eq!(code(&run(&["nonsense"], d)), 2);
}

#[test]
fn constant_data_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let body: String = (0..200).map(|k| format!("{},0.2\n", k as f64 * 0.005)).collect();
    fs::write(dir.path().join("flat.csv"), format!("t,theta_rad\n{body}")).unwrap();
    let out = run(&["fit", "flat.csv"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn train_eval_rollout_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = run(&["train", "--out", "q.csv", "--curve", "curve.csv"], d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(rows(&d.join("q.csv")).len(), 2160);
    let curve = fs::read_to_string(d.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 10_001);

    let out = run(&["eval", "q.csv", "--out", "trials.csv"], d);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(value(&text, "median_survival_s") >= 5.0);
    assert_eq!(
        value(&text, "failure") + value(&text, "timeout") + value(&text, "singularity"),
        100.0
    );
    let trials = fs::read_to_string(d.join("trials.csv")).unwrap();
    assert!(trials.starts_with("trial,steps,survival_s,terminal\n"));
    assert_eq!(trials.lines().count(), 101);

    let out = run(&["rollout", "q.csv", "--out", "roll.csv"], d);
    assert_eq!(code(&out), 0);
    let header = fs::read_to_string(d.join("roll.csv")).unwrap();
    assert!(header.starts_with("t,u_cmd,u_actual,x,x_dot,phi,phi_dot\n"));
    let data = rows(&d.join("roll.csv"));
    assert!(!data.is_empty());
    for r in &data {
        assert!(ACTIONS.contains(&r[1]), "u_cmd {}", r[1]);
    }
    let limit = 11f64.to_radians();
    for r in &data[..data.len() - 1] {
        assert!(r[5].abs() < limit);
    }
}

#[test]
fn zero_table_falls_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = fs::File::create(dir.path().join("zero.csv")).unwrap();
    write_qtable(&mut file, &QTable::pendulum()).unwrap();
    let out = run(&["eval", "zero.csv"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(value(&stdout(&out), "median_survival_s") < 1.0);

    let out = run(&["rollout", "zero.csv", "--out", "roll.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let data = rows(&dir.path().join("roll.csv"));
    let last = data.last().unwrap();
    assert!(last[5].abs() >= 11f64.to_radians() || last[3].abs() >= 0.22);
}
