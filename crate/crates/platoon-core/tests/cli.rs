//! End-to-end checks of the `platoon` binary. Every subcommand is driven
//! through a real child process and its outputs are read back from disk, so
//! these tests cover argument parsing, config loading, file layout, and exit
//! codes in one pass.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use platoon_core::config::Config;
use platoon_core::dynamics::LeaderSchedule;
use platoon_core::harness::{baseline_scenario, TRAJECTORY_SIGNALS};

fn platoon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon"))
        .args(args)
        .output()
        .expect("the platoon binary should spawn")
}

fn baseline_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../baseline.toml")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn simulate_writes_a_deterministic_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let config = baseline_config();

    let run_a = platoon(&[
        "simulate",
        config.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert!(run_a.status.success(), "stderr: {}", stderr_of(&run_a));

    let text = fs::read_to_string(out_a.join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("t,p_0,v_0,u_ctrl_0,u_app_0,dp_0,dv_0,rho1_0,rho2_0,"));
    assert!(header.ends_with("p_10,v_10,u_ctrl_10,u_app_10,dp_10,dv_10,rho1_10,rho2_10"));
    assert_eq!(header.split(',').count(), 1 + 11 * TRAJECTORY_SIGNALS.len());
    // 60 s sampled every 0.1 s: rows at t = 0.0, 0.1, ..., 60.0.
    assert_eq!(lines.count(), 601);

    let stdout = stdout_of(&run_a);
    assert!(stdout.contains("vehicles: 11"), "stdout: {stdout}");
    assert!(
        stdout.contains("platoon peak deviation:"),
        "stdout: {stdout}"
    );

    let run_b = platoon(&[
        "simulate",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert!(run_b.status.success(), "stderr: {}", stderr_of(&run_b));
    assert_eq!(
        fs::read(out_a.join("trajectory.csv")).unwrap(),
        fs::read(out_b.join("trajectory.csv")).unwrap(),
        "repeat runs must be byte-identical"
    );
}

#[test]
fn certify_reports_the_gain_and_writes_both_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cert");
    let config = baseline_config();

    let run = platoon(&[
        "certify",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "stderr: {}", stderr_of(&run));

    let stdout = stdout_of(&run);
    let gamma: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("gamma_tilde: "))
        .expect("stdout should report the gain")
        .parse()
        .unwrap();
    assert!((gamma - 0.5).abs() <= 1e-12, "gamma_tilde = {gamma}");
    assert!(stdout.contains("string_stable: true"), "stdout: {stdout}");

    let text = fs::read_to_string(out.join("certificate.txt")).unwrap();
    assert!(text.contains("string_stable=true"));

    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    let json_gamma = json["gamma_tilde"].as_f64().unwrap();
    assert!(
        (json_gamma - 0.5).abs() <= 1e-12,
        "gamma_tilde = {json_gamma}"
    );
    assert_eq!(json["string_stable"], serde_json::Value::Bool(true));
}

#[test]
fn sweep_verdict_drives_the_exit_code() {
    let config = baseline_config();

    // A single size cannot vary, and the certified gain is below one.
    let pass = platoon(&["sweep", config.to_str().unwrap(), "--sizes", "11"]);
    assert_eq!(pass.status.code(), Some(0), "stderr: {}", stderr_of(&pass));
    assert!(stdout_of(&pass).contains("string-stability verdict: pass"));

    // Very different platoon sizes disagree on the peak deviation under
    // randomized initial conditions, so the default 5% spread fails.
    let fail = platoon(&["sweep", config.to_str().unwrap(), "--sizes", "5,41"]);
    assert_eq!(fail.status.code(), Some(1), "stderr: {}", stderr_of(&fail));
    assert!(stdout_of(&fail).contains("string-stability verdict: fail"));
}

#[test]
fn a_missing_config_exits_with_code_two() {
    let run = platoon(&["simulate", "no-such-file.toml"]);
    assert_eq!(run.status.code(), Some(2));
    let stderr = stderr_of(&run);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
    assert!(stderr.contains("no-such-file.toml"), "stderr: {stderr}");
}

#[test]
fn a_reader_that_stops_early_is_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = baseline_config();
    let sim = platoon(&[
        "simulate",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(sim.status.success(), "stderr: {}", stderr_of(&sim));

    // The full report is megabytes; `head` closes the pipe after two lines
    // and the command must end quietly instead of panicking on the write.
    let piped = Command::new("sh")
        .arg("-c")
        .arg(format!(
            "{} report {} | head -n 2",
            env!("CARGO_BIN_EXE_platoon"),
            out.display()
        ))
        .output()
        .expect("the pipeline should spawn");
    assert!(piped.status.success(), "stderr: {}", stderr_of(&piped));
    assert_eq!(stderr_of(&piped), "", "stderr should be silent");
    assert_eq!(stdout_of(&piped).lines().count(), 2);
}

#[test]
fn report_prints_long_format_rows() {
    let dir = tempfile::tempdir().unwrap();

    // A small quiescent run keeps the long-format dump short.
    let mut scenario = baseline_scenario();
    scenario.n_vehicles = 3;
    scenario.pulses.clear();
    scenario.schedule = LeaderSchedule::constant(14.0);
    scenario.t_end = 1.0;
    scenario.ic_radius_dp = 0.0;
    scenario.ic_radius_dv = 0.0;
    let config_path = dir.path().join("small.toml");
    Config::from_scenario(&scenario)
        .write(&config_path)
        .unwrap();

    let out = dir.path().join("out");
    let sim = platoon(&[
        "simulate",
        config_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(sim.status.success(), "stderr: {}", stderr_of(&sim));

    let by_dir = platoon(&["report", out.to_str().unwrap()]);
    assert!(by_dir.status.success(), "stderr: {}", stderr_of(&by_dir));
    let text = stdout_of(&by_dir);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,vehicle,signal,value");
    // 3 vehicles x 8 signals x 11 samples.
    assert_eq!(lines.clone().count(), 3 * TRAJECTORY_SIGNALS.len() * 11);
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0], "0");
    fields[1].parse::<usize>().unwrap();
    assert!(
        TRAJECTORY_SIGNALS.contains(&fields[2]),
        "signal {}",
        fields[2]
    );
    fields[3].parse::<f64>().unwrap();

    // Passing the CSV path directly is equivalent to passing its directory.
    let by_file = platoon(&["report", out.join("trajectory.csv").to_str().unwrap()]);
    assert!(by_file.status.success(), "stderr: {}", stderr_of(&by_file));
    assert_eq!(by_file.stdout, by_dir.stdout);
}
