use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn blowup(args: &[&str]) -> Output {
    blowup_env(args, None)
}

fn blowup_env(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_blowup"));
    cmd.args(args).env_remove("BLOWUP_WORKERS");
    if let Some(w) = workers {
        cmd.env("BLOWUP_WORKERS", w);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn moments_at_zero_delta() {
    let o = blowup(&["moments", "--n", "3", "--delta", "0", "--order", "64"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let b_col = headers.iter().position(|h| h == "B").unwrap();
    let row = rdr.records().next().unwrap().unwrap();
    let b: f64 = row[b_col].parse().unwrap();
    assert!((b + 2.0 * std::f64::consts::PI).abs() < 1e-7, "{b}");
}

#[test]
fn moments_with_monte_carlo_check() {
    let o = blowup(&["moments", "--n", "4", "--delta", "1e-3,0", "--order", "96", "--mc-check", "1000000", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("agree within"));
    assert!(stdout(&o).lines().next().unwrap().contains("B_mc_se"));
}

#[test]
fn invalid_dimension_exits_2() {
    let o = blowup(&["moments", "--n", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n must be ≥ 2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(blowup(&["moments", "--bogus"]).status.code(), Some(2));
    assert_eq!(blowup(&["moments", "--n", "4", "--delta", "0.1"]).status.code(), Some(2));
    assert_eq!(blowup(&["map", "--n", "3", "--gamma", "0.5"]).status.code(), Some(2));
    assert_eq!(blowup_env(&["moments", "--n", "3"], Some("zero")).status.code(), Some(2));
    assert_eq!(blowup(&["project-grid"]).status.code(), Some(2));
}

#[test]
fn single_map_step_at_zero_delta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("step.json");
    let o = blowup(&["map", "--n", "3", "--tau", "10", "--delta", "0", "--c-gamma", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&out);
    let tau = v["step"]["output"]["tau"].as_f64().unwrap();
    assert!((tau - 10.110318).abs() < 1e-6, "{tau}");
    assert!(dir.path().join("step.json.manifest.json").exists());
}

#[test]
fn iterate_converges_at_zero_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, summary) = (dir.path().join("traj.csv"), dir.path().join("traj.json"));
    let o = blowup(&[
        "iterate", "--n", "3", "--tau0", "10", "--delta0", "0", "--steps", "100", "--out", s(&csv_path), "--summary",
        s(&summary),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = json(&summary);
    assert_eq!(v["summary"]["classification"], "converged");
    assert_eq!(v["summary"]["delta_inf"][0].as_f64().unwrap(), 0.0);

    let manifest = dir.path().join("traj.csv.manifest.json");
    let m = json(&manifest);
    assert_eq!(m["command"], "iterate");
    assert_eq!(m["tool"], "blowup");

    let again = dir.path().join("again");
    let o = blowup(&["replay", s(&manifest), "--out-dir", s(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&csv_path).unwrap(), fs::read(again.join("traj.csv")).unwrap());
    assert_eq!(fs::read(&summary).unwrap(), fs::read(again.join("traj.json")).unwrap());
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let args = [
        "moments", "--n", "4", "--delta", "0.01,0.02", "--delta", "-0.03,0", "--delta", "0,0", "--mc-check", "50000",
        "--seed", "3",
    ];
    let one = blowup_env(&args, Some("1"));
    let three = blowup_env(&args, Some("3"));
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, three.stdout);
    let flag = blowup(&["--workers", "2", "moments", "--n", "4", "--delta", "0.01,0.02", "--delta", "-0.03,0",
        "--delta", "0,0", "--mc-check", "50000", "--seed", "3"]);
    assert_eq!(one.stdout, flag.stdout);
}

#[test]
fn sweep_table_has_one_row_per_cell() {
    let o = blowup(&["sweep", "--n", "3", "--tau0", "10,20", "--delta-mag", "0,0.05", "--steps", "5", "--c-gamma", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 5);
}

#[test]
fn fourier2d_reports_the_half_scale_projection() {
    let o = blowup(&["fourier2d"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let c = v["projection"]["coeff"][0].as_f64().unwrap();
    assert!((c - std::f64::consts::LN_2 / (2.0 * std::f64::consts::PI)).abs() < 1e-6, "{c}");
}

fn projection(args: &[&str]) -> Value {
    let o = blowup(args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    v["projection"].clone()
}

#[test]
fn field_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["field.bin", "field.csv"] {
        let path = dir.path().join(name);
        let direct = projection(&[
            "project-grid", "--synthetic", "tau-p0-z", "--h", "0.03125", "--r", "0.5", "--export", s(&path),
        ]);
        let read = projection(&["project-grid", "--input", s(&path), "--r", "0.5"]);
        assert_eq!(direct, read, "{name}");
        assert!(direct["tau"].as_f64().unwrap() > 9.0);
    }
}

#[test]
fn malformed_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    fs::write(&path, b"{\"format\":\"nope\"}\n").unwrap();
    let o = blowup(&["project-grid", "--input", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_filter_selects_by_tag() {
    let o = blowup(&["verify", "--filter", "fourier2d"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| l.starts_with('A')).collect();
    assert_eq!(lines.len(), 1, "{text}");
    assert!(lines[0].starts_with("A3"));
    assert!(text.contains("/1 criteria passed"));
}

#[test]
fn verify_reports_an_induced_failure() {
    let o = blowup(&["verify", "--filter", "A1", "--order", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("A1   FAIL"), "{}", stdout(&o));
    assert!(stderr(&o).contains("A1"), "{}", stderr(&o));
}

#[test]
fn verify_passes_a_passing_criterion() {
    let o = blowup(&["verify", "--filter", "A1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("1/1 criteria passed"));
}
