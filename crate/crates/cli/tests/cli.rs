use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use doublehinge::csvio;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_doublehinge"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_default_writes_1001_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["trajectory.csv", "measurements.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("t_s,"));
        assert_eq!(lines.count(), 1001, "{name}");
    }
    let m = csvio::read_measurements(&dir.path().join("measurements.csv")).unwrap();
    assert!((m[1000].t - 10.0).abs() < 1e-12);
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["simulate", "--out", arg(d.path()), "--seed", "17", "--scenario", arg(&scenarios().join("rd-m.toml"))]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for name in ["trajectory.csv", "measurements.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn unknown_movement_is_a_usage_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "duration = 1.0\nmovement = \"zz-M\"\n").unwrap();
    let o = run(&["simulate", "--scenario", arg(&path), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("movement") && e.contains("line 2"), "{e}");
}

#[test]
fn bad_flags_are_usage_errors() {
    assert_eq!(run(&["simulate", "--mode", "m3"]).status.code(), Some(1));
    assert_eq!(run(&["estimate", "--rates-free", "maybe"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--trajectory", arg(&dir.path().join("nope.csv")), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn truncated_measurements_name_the_last_valid_row() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.toml");
    fs::write(&short, "duration = 1.0\n").unwrap();
    assert_eq!(run(&["simulate", "--scenario", arg(&short), "--out", arg(dir.path())]).status.code(), Some(0));
    let path = dir.path().join("measurements.csv");
    let text = fs::read_to_string(&path).unwrap();
    // header plus 40 full rows, then half of the next one
    let keep: Vec<&str> = text.lines().take(42).collect();
    let last = keep[41];
    let cut = format!("{}\n{}", keep[..41].join("\n"), &last[..last.len() / 2]);
    fs::write(&path, cut).unwrap();
    let o = run(&["estimate", "--scenario", arg(&short), "--measurements", arg(&path), "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("last valid row is 40"), "{e}");
    assert!(!dir.path().join("estimates.csv").exists());
}

fn verdict_fraction(scenario: &str, seed: &str) -> f64 {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["analyze", "--scenario", arg(&scenarios().join(scenario)), "--seed", seed, "--out", arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v = csvio::read_verdicts(&dir.path().join("verdicts.csv")).unwrap();
    assert_eq!(v.len(), 1001);
    let text = fs::read_to_string(dir.path().join("projections.csv")).unwrap();
    assert_eq!(text.lines().count(), 1002);
    v.iter().filter(|(_, obs)| *obs).count() as f64 / v.len() as f64
}

#[test]
fn analyze_verdicts_per_movement() {
    assert_eq!(verdict_fraction("no-m-twisted.toml", "1"), 0.0);
    assert_eq!(verdict_fraction("mo-m.toml", "1"), 1.0);
    // the rd-M fraction varies with the seed (94.7% to 99.8% over seeds 1-30, see README)
    assert!(verdict_fraction("rd-m.toml", "21") >= 0.99);
}

fn final_errors(args: &[&str]) -> Vec<(f64, f64)> {
    let dir = tempfile::tempdir().unwrap();
    let mut all = vec!["estimate", "--out", arg(dir.path())];
    all.extend_from_slice(args);
    let o = run(&all);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (times, errors) = csvio::read_errors(&dir.path().join("errors.csv")).unwrap();
    assert_eq!(times.len(), 1001);
    let est = csvio::read_estimates(&dir.path().join("estimates.csv")).unwrap();
    assert_eq!(est.estimates.len(), 1001);
    errors.iter().map(|e| (e.phi_ji.to_degrees(), e.phi_ki.to_degrees())).collect()
}

#[test]
fn estimate_mo_m_converges() {
    // seed 5 lands in the true basin; mo-M is ambiguous for other seeds (see README)
    let mo = scenarios().join("mo-m.toml");
    let errors = final_errors(&["--scenario", arg(&mo), "--seed", "5"]);
    for (ji, ki) in &errors[errors.len() - 100..] {
        assert!(*ji < 4.0 && *ki < 4.0, "{ji} {ki}");
    }
}

#[test]
fn estimate_no_m_keeps_its_error() {
    let errors = final_errors(&["--scenario", arg(&scenarios().join("no-m-twisted.toml"))]);
    for (ji, ki) in &errors {
        assert!(*ji >= 10.0 && *ki >= 10.0, "{ji} {ki}");
    }
}

#[test]
fn estimate_reads_simulated_files() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.toml");
    fs::write(&short, "movement = \"rd-M\"\nduration = 1.5\nmode = \"m2\"\n").unwrap();
    assert_eq!(run(&["simulate", "--scenario", arg(&short), "--out", arg(dir.path())]).status.code(), Some(0));
    let from_files = dir.path().join("files");
    let regenerated = dir.path().join("regen");
    let traj = dir.path().join("trajectory.csv");
    let meas = dir.path().join("measurements.csv");
    let a = run(&["estimate", "--scenario", arg(&short), "--trajectory", arg(&traj), "--measurements", arg(&meas), "--out", arg(&from_files)]);
    let b = run(&["estimate", "--scenario", arg(&short), "--out", arg(&regenerated)]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let (_, ea) = csvio::read_errors(&from_files.join("errors.csv")).unwrap();
    let (_, eb) = csvio::read_errors(&regenerated.join("errors.csv")).unwrap();
    // CSV round trip is exact to printed precision, so the runs agree closely
    for (x, y) in ea.iter().zip(&eb) {
        assert!((x.phi_ji - y.phi_ji).abs() < 1e-6 && (x.phi_ki - y.phi_ki).abs() < 1e-6);
    }
}

#[test]
fn reproduce_ablation_creates_out_dir_and_reports_every_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/report");
    let o = run(&["reproduce", "--scenario", arg(&scenarios().join("ablation-no-velocity.toml")), "--out", arg(&out)]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let criteria = report["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 8);
    let passed = report["passed"].as_bool().unwrap();
    assert_eq!(o.status.code(), Some(if passed { 0 } else { 2 }));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for c in criteria {
        let id = c["id"].as_u64().unwrap();
        let verdict = if c["passed"].as_bool().unwrap() { "PASS" } else { "FAIL" };
        assert!(stdout.contains(&format!("criterion {id} {verdict}")), "{stdout}");
        assert!(c["measured"].as_str().is_some_and(|m| !m.is_empty()));
    }
    for label in ["mo-M_m1", "mo-M_m2", "rd-M_m1", "rd-M_m2", "no-M_m2"] {
        assert!(out.join(format!("errors_{label}.csv")).exists(), "{label}");
    }
}
