use std::path::Path;
use std::process::{Command, Output};

fn nullctl(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nullctl"));
    cmd.args(args).env_remove("NULLCTL_OUT");
    if let Some(d) = env_out {
        cmd.env("NULLCTL_OUT", d);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

const PRESETS: [&str; 9] = [
    "forward_sine",
    "forward_bessel",
    "hum_control",
    "variational_control",
    "memory_preset",
    "two_phase_step",
    "carleman_suite",
    "spectral_scan",
    "hardy_suite",
];

#[test]
fn presets_are_listed_and_validate() {
    let o = nullctl(&["presets", "list"], None);
    assert_eq!(code(&o), 0);
    let listing = String::from_utf8_lossy(&o.stdout);
    for p in PRESETS {
        assert!(listing.contains(p), "{p} missing from listing");
        let v = nullctl(&["validate", &format!("preset:{p}")], None);
        assert_eq!(code(&v), 0, "{p}: {}", stderr(&v));
    }
}

#[test]
fn forward_sine_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = nullctl(&["run", "preset:forward_sine", "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&out);
    assert!(s["terminal_error"].as_f64().unwrap() <= 1e-3);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("t,x_1,x_2"));
    assert_eq!(lines.next().unwrap().split(',').next().unwrap(), "0.000000000000e+00");
    assert_eq!(csv.lines().count(), 66);
    let dat = std::fs::read_to_string(out.join("terminal.dat")).unwrap();
    assert!(dat.starts_with("# x y_T exact\n"));
}

#[test]
fn memory_preset_reaches_null() {
    let tmp = tempfile::tempdir().unwrap();
    let o = nullctl(&["run", "preset:memory_preset", "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(tmp.path());
    assert_eq!(s["converged"], true);
    assert_eq!(s["null_ok"], true);
    assert!(tmp.path().join("picard.dat").exists());
    assert!(tmp.path().join("control.csv").exists());
}

#[test]
fn k_mutation_names_the_constraint() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "k2.json",
        r#"{
  "scenario": "memory",
  "problem": { "nx": 20, "nt": 20 },
  "weights": { "s": 1e-4, "k": 2.0 },
  "kernel": { "kind": "decay_exp", "amplitude": 5.0, "M0": 4.0 }
}"#,
    );
    let o = nullctl(&["validate", &cfg], None);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("k_range"), "{err}");
    assert!(err.contains("k2.json:4"), "{err}");
}

#[test]
fn constant_kernel_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"scenario": "memory", "weights": {"s": 1e-4}, "kernel": {"kind": "constant", "amplitude": 1.0}}"#,
    );
    let o = nullctl(&["run", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("summary.json").exists());
}

#[test]
fn malformed_and_missing_inputs_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = write(
        tmp.path(),
        "m.json",
        r#"{"scenario": "forward", "problem": {"y0": {"csv": "absent.csv"}}}"#,
    );
    assert_eq!(code(&nullctl(&["validate", &missing], None)), 1);

    let typo = write(tmp.path(), "t.json", "{\n  \"scenario\": \"forward\",\n  \"problme\": {}\n}\n");
    let o = nullctl(&["validate", &typo], None);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("t.json:3:"), "{}", stderr(&o));

    let bad_enum = write(tmp.path(), "e.json", r#"{"scenario": "backward"}"#);
    assert_eq!(code(&nullctl(&["validate", &bad_enum], None)), 1);
    assert_eq!(code(&nullctl(&["validate", "preset:nonexistent"], None)), 1);
    assert_eq!(code(&nullctl(&["validate", "/nonexistent/config.json"], None)), 1);
}

#[test]
fn csv_initial_data_relative_to_config() {
    let tmp = tempfile::tempdir().unwrap();
    let values: Vec<String> = (1..=10).map(|i| format!("{}", (i as f64 / 11.0) * (1.0 - i as f64 / 11.0))).collect();
    write(tmp.path(), "y0.csv", &format!("y0\n{}\n", values.join("\n")));
    let cfg = write(
        tmp.path(),
        "f.json",
        r#"{"scenario": "forward", "problem": {"nx": 10, "nt": 10, "y0": {"csv": "y0.csv"}}}"#,
    );
    let out = tmp.path().join("o");
    let o = nullctl(&["run", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let wrong_len = write(
        tmp.path(),
        "g.json",
        r#"{"scenario": "forward", "problem": {"nx": 12, "y0": {"csv": "y0.csv"}}}"#,
    );
    assert_eq!(code(&nullctl(&["validate", &wrong_len], None)), 2);
}

#[test]
fn starved_solver_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "nc.json",
        r#"{"scenario": "control", "problem": {"nx": 30, "nt": 30}, "solver": {"cg_max": 3}}"#,
    );
    let o = nullctl(&["run", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(code(&o), 3);
    let s = summary(tmp.path());
    assert_eq!(s["exit_code"], 3);
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("env");
    let cfg = write(tmp.path(), "h.json", r#"{"scenario": "hardy_suite", "hardy": {"nx": [20]}}"#);
    assert_eq!(code(&nullctl(&["run", &cfg], Some(&env_dir))), 0);
    assert!(env_dir.join("summary.json").exists());

    let cfg_dir = write(
        tmp.path(),
        "h2.json",
        r#"{"scenario": "hardy_suite", "hardy": {"nx": [20]}, "output": {"directory": "cfgout", "prefix": "h2_"}}"#,
    );
    assert_eq!(code(&nullctl(&["run", &cfg_dir], Some(&env_dir))), 0);
    assert!(tmp.path().join("cfgout/h2_summary.json").exists());
    assert!(tmp.path().join("cfgout/h2_hardy.csv").exists());

    let flag = tmp.path().join("flag");
    assert_eq!(code(&nullctl(&["run", &cfg_dir, "--out", flag.to_str().unwrap()], Some(&env_dir))), 0);
    assert!(flag.join("h2_summary.json").exists());
}

#[test]
fn parallel_runs_match_serial_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("serial");
    let b = tmp.path().join("parallel");
    let args = ["preset:hardy_suite", "preset:forward_sine", "preset:carleman_suite"];
    let mut serial = vec!["run"];
    serial.extend(args);
    serial.extend(["--out", a.to_str().unwrap()]);
    assert_eq!(code(&nullctl(&serial, None)), 0);
    let mut par = vec!["run"];
    par.extend(args);
    par.extend(["--out", b.to_str().unwrap(), "--jobs", "3"]);
    assert_eq!(code(&nullctl(&par, None)), 0);
    for name in ["hardy_suite", "forward_sine", "carleman_suite"] {
        let x = std::fs::read(a.join(name).join("summary.json")).unwrap();
        let y = std::fs::read(b.join(name).join("summary.json")).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn worst_status_wins() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"scenario": "memory", "weights": {"d": 3.0}, "kernel": {"kind": "decay_exp", "amplitude": 1.0, "M0": 10.0}}"#);
    let o = nullctl(&["run", "preset:hardy_suite", &bad, "--out", tmp.path().to_str().unwrap(), "--jobs", "2"], None);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("d_above_three"));
}
