use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn glasslab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_glasslab")).args(args).env_remove("GLASSLAB_WORKERS").output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn stat(csv: &str, n: usize, name: &str) -> f64 {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|c| c[1] == n.to_string() && c[6] == name)
        .map(|c| c[7].parse().unwrap())
        .unwrap_or_else(|| panic!("no {name} at N={n}"))
}

const SWEEP: &str = "kind = SK\nbeta = 0.4\nh = 0.3\nn = 6, 8\nk = 2\nn_disorders = 24\nbackend = exact\n";

#[test]
fn rs_solve_writes_certified_solution() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "rs.cfg", "kind = SK\nbeta = 0.3\nh = 0.5\n");
    let out = tmp.path().join("out");
    let o = glasslab(&["rs-solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let sol: Value = serde_json::from_str(&fs::read_to_string(out.join("rs_solution.json")).unwrap()).unwrap();
    assert!(sol["residual_inf"].as_f64().unwrap() < 1e-10);
    assert_eq!(sol["converged"], Value::Bool(true));
}

#[test]
fn zero_beta_sweep_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "li.cfg", &SWEEP.replace("beta = 0.4", "beta = 0"));
    let out = tmp.path().join("out");
    let o = glasslab(&["li-sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    for n in [6, 8] {
        assert!(stat(&csv, n, "tv_mean") < 1e-10);
    }
}

#[test]
fn invalid_config_leaves_nothing_behind() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", &SWEEP.replace("beta = 0.4", "beta = -0.4"));
    let out = tmp.path().join("out");
    let o = glasslab(&["li-sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert!(!out.exists());

    let cfg = write(tmp.path(), "wide.cfg", &SWEEP.replace("n = 6, 8", "n = 6, 40"));
    assert!(!glasslab(&["li-sweep", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    assert!(!out.exists());
}

#[test]
fn manifest_lists_parseable_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "li.cfg", SWEEP);
    let out = tmp.path().join("out");
    assert!(glasslab(&["li-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "2"]).status.success());
    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["records"].as_array().unwrap().len(), 48);
    for a in manifest["artifacts"].as_array().unwrap() {
        let name = a.as_str().unwrap();
        let text = fs::read_to_string(out.join(name)).unwrap_or_else(|_| panic!("{name} missing"));
        if name.ends_with(".json") {
            serde_json::from_str::<Value>(&text).unwrap();
        } else if name.ends_with(".jsonl") {
            for l in text.lines() {
                serde_json::from_str::<Value>(l).unwrap();
            }
        } else {
            let mut rows = text.lines();
            let width = rows.next().unwrap().split(',').count();
            assert!(rows.all(|r| r.split(',').count() == width));
        }
    }
}

#[test]
fn resumed_and_parallel_runs_match() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "li.cfg", SWEEP);
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let o = glasslab(&["li-sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let one = run("one", "1");
    let eight = run("eight", "8");
    let reference = fs::read_to_string(one.join("summary.csv")).unwrap();
    assert_eq!(reference, fs::read_to_string(eight.join("summary.csv")).unwrap());

    // drop half the log, then resume
    let log = fs::read_to_string(one.join("records.jsonl")).unwrap();
    let kept: Vec<&str> = log.lines().take(30).collect();
    fs::write(one.join("records.jsonl"), kept.join("\n") + "\n").unwrap();
    fs::remove_file(one.join("summary.csv")).unwrap();
    run("one", "3");
    assert_eq!(reference, fs::read_to_string(one.join("summary.csv")).unwrap());
    assert_eq!(fs::read_to_string(one.join("records.jsonl")).unwrap().lines().count(), 48);

    // a different config may not reuse the directory
    let other = write(tmp.path(), "other.cfg", &SWEEP.replace("h = 0.3", "h = 0.2"));
    let o = glasslab(&["li-sweep", "--config", &other, "--out", one.to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn seed_override_changes_the_disorders() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.cfg", &SWEEP.replace("k = 2\n", ""));
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = glasslab(&["concentration", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("summary.csv")).unwrap()
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn gap_and_projection_run() {
    let tmp = tempfile::tempdir().unwrap();
    let gap = write(tmp.path(), "g.cfg", &SWEEP.replace("n = 6, 8", "n = 6, 12"));
    let out = tmp.path().join("gap");
    let o = glasslab(&["decompose-gap", "--config", &gap, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("gap_report.json")).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 2);

    let out = tmp.path().join("proj");
    let o = glasslab(&["projection", "--config", &gap, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("projection_N12.json").exists());
}
