use std::path::Path;
use std::process::{Command, Output};

fn cge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cge")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = cge(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn staged_commands_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["gen-env", "--side", "60", "--seed", "7", "--out", &path(d, "env.json")]);
    ok(&[
        "solve-vrp", "--env", &path(d, "env.json"), "--starts", "0,0,0", "--time-limit", "2", "--seed", "7", "--out",
        &path(d, "vrp.json"),
    ]);
    ok(&["build-pg", "--env", &path(d, "env.json"), "--vrp", &path(d, "vrp.json"), "--out", &path(d, "pg.json")]);
    for algo in ["sgre", "dgre", "dgre-order", "dusm", "dusm-order"] {
        ok(&[
            "select-loops", "--pg", &path(d, "pg.json"), "--algo", algo, "--seed", "7", "--lambda", "0.3", "--out",
            &path(d, "sel.json"),
        ]);
    }
    ok(&["select-loops", "--pg", &path(d, "pg.json"), "--algo", "sgre", "--lazy", "--out", &path(d, "sel.json")]);
    ok(&["finalize", "--vrp", &path(d, "vrp.json"), "--sel", &path(d, "sel.json"), "--out", &path(d, "plan.json")]);

    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["walks"].as_array().unwrap().len(), 3);
    assert!(plan["makespan"].as_f64().unwrap() > 0.0);
}

#[test]
fn run_writes_every_document() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(&["run", "--side", "40", "--seed", "3", "--time-limit", "1", "--out-dir", out.to_str().unwrap()]);
    for f in ["env.json", "vrp.json", "pg.json", "sel.json", "plan.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn failures_exit_nonzero_with_stage_tag() {
    let out = cge(&["gen-env", "--side", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[environment]"));

    let dir = tempfile::tempdir().unwrap();
    let env = path(dir.path(), "env.json");
    ok(&["gen-env", "--side", "40", "--out", &env]);
    let out = cge(&["solve-vrp", "--env", &env, "--starts", "0,100000"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[routing]"));

    let out = cge(&["select-loops", "--pg", &path(dir.path(), "missing.json")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[pose-graph]"));

    let out = cge(&["select-loops", "--pg", &env, "--algo", "dgre", "--lazy"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[selection]"));
}

#[test]
fn bench_reads_config_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sizes": [40], "trials": 2, "algorithms": ["sgre", "dgre"], "vrp_time_limit_s": 1}"#)
        .unwrap();
    let out = dir.path().join("out");
    ok(&["bench", "--config", cfg.to_str().unwrap(), "--seed", "9", "--out-dir", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2);

    std::fs::write(&cfg, r#"{"sizes": [40], "bogus": 1}"#).unwrap();
    let out = cge(&["bench", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[config]"));
}

#[test]
fn validate_fim_writes_points_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(dir.path(), "fim.csv");
    ok(&["validate-fim", "--side", "40", "--trials", "3", "--seed", "1", "--out", &csv]);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);
    assert!(dir.path().join("fim.json").exists());
}
