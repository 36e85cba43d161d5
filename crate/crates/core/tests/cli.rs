use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = r#"{"N": 2, "alpha": 1.0,
    "grid": {"r0": 1.0, "r_max": 30.0, "n": 291},
    "data": {"center": 3.0, "width": 1.0, "amp_u0": 1.0, "amp_u1": 1.0},
    "run": {"T": 20.0, "record_every": 0.5, "fit_window": [4.0, 20.0]},
    "checks": ["hardy", "monotonicity", "appfps"]}"#;

fn dwlab(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dwlab"));
    cmd.args(args).env_remove("DWLAB_OUTPUT_DIR");
    if let Some(d) = env_out {
        cmd.env("DWLAB_OUTPUT_DIR", d);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn help_lists_subcommands() {
    let out = dwlab(&["--help"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["weight", "wave", "heat", "compare", "transform-check", "duhamel", "sweep"] {
        assert!(text.contains(sub), "{sub}");
    }
    assert_eq!(dwlab(&["frobnicate"], None).status.code(), Some(2));
    assert_eq!(dwlab(&["wave"], None).status.code(), Some(2));
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let flag = dir.path().join("flag");
    let env = dir.path().join("env");
    let out = dwlab(&["wave", &cfg, "-o", flag.to_str().unwrap()], Some(&env));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(flag.join("verdict.json").exists());
    assert!(!env.exists());
    let out = dwlab(&["wave", &cfg], Some(&env));
    assert_eq!(out.status.code(), Some(0));
    assert!(env.join("energy.csv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("PASS hardy")));
}

#[test]
fn validation_message_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SHORT.replace("\"r_max\": 30.0", "\"r_max\": 10.0"));
    let out = dwlab(&["wave", &cfg, "-o", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("grid.r_max"), "{err}");
    assert!(err.contains("finite-speed"), "{err}");
}

#[test]
fn runtime_failure_leaves_aborted_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let body = SHORT.replace("[4.0, 20.0]", "[19.9, 20.0]").replace("\"hardy\", \"monotonicity\", \"appfps\"", "");
    let cfg = write_config(dir.path(), &body);
    let o = dir.path().join("o");
    let out = dwlab(&["wave", &cfg, "-o", o.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(4));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("verdict.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "aborted");
    assert_eq!(v["all_pass"], false);
    assert!(!v["error"].as_str().unwrap().is_empty());
}

#[test]
fn sweep_runs_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let o = dir.path().join("sweep");
    let out = dwlab(
        &["sweep", &cfg, "--command", "wave", "--set", "alpha=0.5,1.0", "--set", "eps=0.1,0.2", "-o", o.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 4);
    assert!(o.join("alpha=0.5_eps=0.2").join("verdict.json").exists());
    let bad = dwlab(&["sweep", &cfg, "--set", "alpha"], None);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verdict_has_no_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT);
    let o = dir.path().join("o");
    dwlab(&["wave", &cfg, "-o", o.to_str().unwrap()], None);
    let first = std::fs::read(o.join("verdict.json")).unwrap();
    dwlab(&["wave", &cfg, "-o", o.to_str().unwrap()], None);
    assert_eq!(first, std::fs::read(o.join("verdict.json")).unwrap());
    let art: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("artifact.json")).unwrap()).unwrap();
    assert!(art["wall_clock_s"].as_f64().unwrap() >= 0.0);
}
