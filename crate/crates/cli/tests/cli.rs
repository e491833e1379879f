//! End-to-end checks of the binary: exit codes, file outputs, and the
//! formats downstream tooling parses.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn pathlab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pathlab"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut dir = std::env::temp_dir();
    dir.push(format!("pathlab-cli-{}-{name}", std::process::id()));
    dir
}

fn write_single_exit_mdp(path: &PathBuf) {
    fs::write(
        path,
        r#"{"S":1,"A":1,"init":0,"reward":[[0.5]],"transition":[[[0.0,1.0]]]}"#,
    )
    .unwrap();
}

#[test]
fn solve_prints_v_star() {
    let mdp = temp_path("solve.json");
    write_single_exit_mdp(&mdp);
    let out = pathlab().arg("solve").arg(&mdp).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("V_star=0.5"), "got: {text}");
    assert!(text.contains("T_max=1"), "got: {text}");
    fs::remove_file(&mdp).ok();
}

#[test]
fn gen_then_solve_reports_closed_form() {
    let out_path = temp_path("glb.json");
    let status = pathlab()
        .args(["gen", "general-lb", "--epsilon", "0.1", "--delta", "0.05", "-o"])
        .arg(&out_path)
        .status()
        .unwrap();
    assert!(status.success());

    let out = pathlab()
        .args(["solve", "--json"])
        .arg(&out_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let vx = parsed["values"][0].as_f64().unwrap();
    assert!((vx - 1.2820512820512822).abs() < 1e-8, "V*(x) = {vx}");
    fs::remove_file(&out_path).ok();
}

#[test]
fn run_emits_header_plus_k_rows() {
    let mdp = temp_path("run.json");
    write_single_exit_mdp(&mdp);
    let out = pathlab()
        .args(["run", "--env"])
        .arg(&mdp)
        .args(["--algo", "vi-sp", "--b", "2.0", "--K", "10", "--seed", "7"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# {"));
    assert_eq!(lines[1], "k,episode_reward,episode_steps,cumulative_regret,B_cur");
    assert_eq!(lines.len(), 2 + 10, "expected 10 data rows");
    fs::remove_file(&mdp).ok();
}

#[test]
fn sweep_writes_csv_and_fit() {
    let mdp = temp_path("sweep.json");
    write_single_exit_mdp(&mdp);
    let csv = temp_path("sweep.csv");
    let out = pathlab()
        .args(["sweep", "--env"])
        .arg(&mdp)
        .args(["--algo", "oracle", "--Ks", "4,8,16", "--seeds", "2", "-o"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# {"));
    assert!(text.lines().nth(1) == Some("K,seed,final_regret,total_steps"));
    assert_eq!(text.lines().count(), 2 + 6);
    fs::remove_file(&mdp).ok();
    fs::remove_file(&csv).ok();
}

#[test]
fn audit_reports_zero_violations_for_oracle() {
    let mdp = temp_path("audit.json");
    write_single_exit_mdp(&mdp);
    let out = pathlab()
        .args(["audit", "--env"])
        .arg(&mdp)
        .args(["--algo", "oracle", "--K", "5", "--seeds", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["violating_runs"], 0);
    assert_eq!(parsed["runs"], 3);
    fs::remove_file(&mdp).ok();
}

#[test]
fn usage_errors_exit_two() {
    let out = pathlab().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    // vi-slp without --zeta/--u is a usage error too
    let mdp = temp_path("usage.json");
    write_single_exit_mdp(&mdp);
    let out = pathlab()
        .args(["run", "--env"])
        .arg(&mdp)
        .args(["--algo", "vi-slp", "--K", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    fs::remove_file(&mdp).ok();
}

#[test]
fn runtime_errors_exit_one_with_json_line() {
    // an improper environment: the single action self-loops forever
    let mdp = temp_path("trap.json");
    fs::write(
        &mdp,
        r#"{"S":1,"A":1,"init":0,"reward":[[0.0]],"transition":[[[1.0,0.0]]]}"#,
    )
    .unwrap();
    let out = pathlab().arg("solve").arg(&mdp).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap();
    let parsed: serde_json::Value = serde_json::from_str(line).unwrap();
    assert!(parsed["error"].as_str().unwrap().contains("proper"));
    fs::remove_file(&mdp).ok();
}

#[test]
fn validate_reports_trapping_set() {
    let mdp = temp_path("validate.json");
    fs::write(
        &mdp,
        r#"{"S":2,"A":2,"init":0,
            "reward":[[0.1,0.2],[0.0,0.0]],
            "transition":[[[1.0,0.0,0.0],[0.0,0.0,1.0]],[[0.0,0.0,1.0],[0.0,0.0,1.0]]]}"#,
    )
    .unwrap();
    let out = pathlab().arg("validate").arg(&mdp).output().unwrap();
    assert!(out.status.success(), "validate reports, never fails");
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["all_proper"], false);
    assert_eq!(parsed["trapping_set"][0], 0);
    fs::remove_file(&mdp).ok();
}
