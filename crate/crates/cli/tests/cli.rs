use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinbath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinbath"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--bath-spins",
        "2",
        "--t-max",
        "2",
        "--samples",
        "11",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    spinbath(&args)
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn run_writes_time_series_with_embedded_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), &["--initial-state", "bell2", "--oracle-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("oracle max deviation"));

    let text = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    assert!(text.contains("# initial_state = \"bell2\""));
    assert!(text.contains("# oracle_check = true"));
    let lines = data_lines(&text);
    assert_eq!(lines[0], "t,sx1,sy1,sz1,sx2,sy2,sz2,cxx,cyy,czz,concurrence,p0,p1,p2");
    assert_eq!(lines.len(), 12);
    // 12 significant digits
    let first_value = lines[1].split(',').nth(7).unwrap();
    assert_eq!(first_value, "1.00000000000e0");

    let iso = fs::read_to_string(dir.path().join("timeseries_isolated.csv")).unwrap();
    assert_eq!(data_lines(&iso)[0], "t,sx1,sy1,sz1,sx2,sy2,sz2,cxx,cyy,czz,concurrence");
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), &["--temperature", "1.0", "--threshold", "1e-6"]).status.success());
    assert!(small_run(b.path(), &["--temperature", "1.0", "--threshold", "1e-6", "--sequential"]).status.success());
    let fa = fs::read_to_string(a.path().join("timeseries.csv")).unwrap();
    let fb = fs::read_to_string(b.path().join("timeseries.csv")).unwrap();
    // only the recorded parallelism policy and output directory differ
    let strip = |s: &str| {
        s.lines()
            .filter(|l| !l.starts_with("# parallelism") && !l.starts_with("# dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&fa), strip(&fb));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "t_max = 1.0\nn_samples = 5\ninitial_state = \"bell4\"\n[model]\nn_bath = 1\nlambda_sb = 2.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = spinbath(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--samples",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    assert!(text.contains("# n_samples = 7"));
    assert!(text.contains("# lambda_sb = 2.0"));
    assert_eq!(data_lines(&text).len(), 8);
}

#[test]
fn exit_codes() {
    let bad_value = spinbath(&["run", "--temperature", "-1"]);
    assert_eq!(bad_value.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "no_such_key = 3\n").unwrap();
    let unknown = spinbath(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("configuration error"));

    let too_big = spinbath(&["run", "--bath-spins", "15", "--t-max", "1", "--samples", "2"]);
    assert_eq!(too_big.status.code(), Some(4));

    let bad_state = spinbath(&["run", "--initial-state", "bell7"]);
    assert_eq!(bad_state.status.code(), Some(2));
}

#[test]
fn table1_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinbath(&["table1", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "threshold,temperature,computed,reference,match");
    assert_eq!(lines.len(), 19);
    assert!(lines.contains(&"1e-5,0.05,8,8,true"));
}

#[test]
fn sweep_and_order_sweep_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let common = ["--bath-spins", "2", "--t-max", "2", "--samples", "11", "--initial-state", "bell2", "--out", d];

    let mut args = vec!["sweep", "--param", "lambda-bb", "--values", "1,3"];
    args.extend_from_slice(&common);
    let out = spinbath(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,ok,"));
    assert!(dir.path().join("lambda_bb_3.csv").exists());

    let mut args = vec!["order-sweep", "--lambda-grid", "0,2,4"];
    args.extend_from_slice(&common);
    let out = spinbath(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("order_sweep.csv")).unwrap();
    let lines = data_lines(&text);
    assert_eq!(lines[0], "lambda_bb,p_half,p_half_stderr_over_time");
    assert_eq!(lines.len(), 4);
}

#[test]
fn failing_sweep_value_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = spinbath(&[
        "sweep",
        "--param",
        "temperature",
        "--values",
        "0.5,-1",
        "--bath-spins",
        "1",
        "--t-max",
        "1",
        "--samples",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary = fs::read_to_string(dir.path().join("sweep_summary.csv")).unwrap();
    assert!(summary.contains("0.5,ok,"));
    assert!(summary.contains("-1,error,"));
}
