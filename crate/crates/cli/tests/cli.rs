//! End-to-end checks of the binary: exit codes, file outputs, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_iccbf"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn config(name: &str) -> String {
    configs_dir().join(name).to_string_lossy().to_string()
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("iccbf-cli-test-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn list_models_names_all_builtins() {
    let out = run(&["list-models"]);
    assert_eq!(exit_code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["scalar-example", "acc", "rendezvous", "double-integrator"] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn simulate_safe_acc_run_exits_zero_with_artifacts() {
    let dir = tmp_dir("acc-safe");
    let out = run(&[
        "simulate",
        "--config",
        &config("acc-iccbf.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let traj = read(&dir.join("trajectory.csv"));
    let header = traj.lines().next().unwrap();
    assert_eq!(header, "t,x_1,x_2,u_1,h,b_0,b_1,b_2");
    assert!(traj.lines().count() > 4000);

    let summary = read(&dir.join("summary.txt"));
    let min_h: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("min_h = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(min_h >= 0.0);
    assert!(summary.contains("safety_violation = false"));

    let events = read(&dir.join("events.csv"));
    assert!(!events.contains("safety-violation"));
}

#[test]
fn simulate_baseline_exits_one_with_violation_event() {
    let dir = tmp_dir("acc-base");
    let out = run(&[
        "simulate",
        "--config",
        &config("acc-baseline.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    let events = read(&dir.join("events.csv"));
    assert!(events.contains("safety-violation"), "events:\n{events}");
    let summary = read(&dir.join("summary.txt"));
    assert!(summary.contains("safety_violation = true"));
}

#[test]
fn simulate_rendezvous_reaches_goal_within_thrust_budget() {
    let dir = tmp_dir("rdv");
    let out = run(&[
        "simulate",
        "--config",
        &config("rendezvous.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let summary = read(&dir.join("summary.txt"));
    assert!(!summary.contains("goal_time = none"), "summary:\n{summary}");
    let max_u1: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("max_control_one_norm = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(max_u1 <= 0.25 + 1e-8);
    let events = read(&dir.join("events.csv"));
    assert!(events.contains("goal-reached"));
}

#[test]
fn verify_writes_certificate_and_exit_tracks_result() {
    let dir = tmp_dir("verify-ok");
    let out = run(&[
        "verify",
        "--config",
        &config("double-integrator.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    let cert = read(&dir.join("certificate.txt"));
    assert!(cert.contains("is_iccbf = true"));
    assert!(cert.contains("method = sampling+refinement"));

    let dir = tmp_dir("verify-neg");
    let out = run(&[
        "verify",
        "--config",
        &config("scalar-example-h-only.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 1);
    let cert = read(&dir.join("certificate.txt"));
    assert!(cert.contains("is_iccbf = false"));
    // write_trace = true in this config
    assert!(dir.join("refinement_trace.csv").exists());
}

#[test]
fn verify_is_deterministic_for_a_seed() {
    let dir_a = tmp_dir("seed-a");
    let dir_b = tmp_dir("seed-b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "verify",
            "--config",
            &config("scalar-example.toml"),
            "--seed",
            "99",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 0);
    }
    assert_eq!(
        read(&dir_a.join("certificate.txt")),
        read(&dir_b.join("certificate.txt"))
    );
}

#[test]
fn boundary_grid_writes_per_level_and_conjunction() {
    let dir = tmp_dir("grid");
    let out = run(&[
        "boundary-grid",
        "--config",
        &config("double-integrator.toml"),
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let l0 = read(&dir.join("level_0.csv"));
    let l1 = read(&dir.join("level_1.csv"));
    let cs = read(&dir.join("c_star.csv"));
    assert!(l0.starts_with("x_1,x_2,b_0,label"));
    assert!(l1.starts_with("x_1,x_2,b_1,label"));
    // conjunction: in_c_star = both level values nonnegative, row by row
    for ((r0, r1), rc) in l0.lines().skip(1).zip(l1.lines().skip(1)).zip(cs.lines().skip(1)) {
        let b0: f64 = r0.split(',').nth(2).unwrap().parse().unwrap();
        let b1: f64 = r1.split(',').nth(2).unwrap().parse().unwrap();
        let inside: bool = rc.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(inside, b0 >= 0.0 && b1 >= 0.0, "{r0} | {r1} | {rc}");
    }
}

#[test]
fn malformed_and_invalid_configs_exit_two() {
    let dir = tmp_dir("bad");
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "this is not toml [").unwrap();
    let out = run(&["simulate", "--config", bad.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    // well-formed TOML with an unknown key is also a config error
    let sneaky = dir.join("sneaky.toml");
    let mut text = read(&configs_dir().join("scalar-example.toml"));
    text.push_str("\n[extra]\nkey = 1\n");
    std::fs::write(&sneaky, text).unwrap();
    let out = run(&["simulate", "--config", sneaky.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);

    let out = run(&["simulate", "--config", "/nonexistent/nope.toml"]);
    assert_eq!(exit_code(&out), 2);

    // structurally valid config lacking the section the subcommand needs
    let out = run(&["verify", "--config", &config("acc-baseline.toml")]);
    assert_eq!(exit_code(&out), 2);
    let out = run(&["boundary-grid", "--config", &config("rendezvous.toml")]);
    assert_eq!(exit_code(&out), 2);
    let out = run(&["simulate", "--config", &config("scalar-example-h-only.toml")]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn batch_runs_isolate_outputs_and_aggregate_exit() {
    let dir = tmp_dir("batch");
    let out = run(&[
        "simulate",
        "--config",
        &config("scalar-example.toml"),
        "--config",
        &config("acc-baseline.toml"),
        "--parallel",
        "2",
        "--out",
        dir.to_str().unwrap(),
    ]);
    // baseline fails, so the batch exit is 1
    assert_eq!(exit_code(&out), 1);
    assert!(dir.join("scalar-example/summary.txt").exists());
    assert!(dir.join("acc-baseline/summary.txt").exists());
}

#[test]
fn env_var_overrides_config_output_dir() {
    let dir = tmp_dir("envdir");
    let out = bin()
        .args(["simulate", "--config", &config("scalar-example.toml")])
        .env("ICCBF_OUT_DIR", dir.to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("summary.txt").exists());
}

#[test]
fn bundled_configs_parse_and_round_trip() {
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e != "toml").unwrap_or(true) {
            continue;
        }
        let parsed = iccbf::config::ScenarioConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let text = parsed.to_toml_string().unwrap();
        let reparsed = iccbf::config::ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(parsed, reparsed, "round trip changed {}", path.display());
    }
}
