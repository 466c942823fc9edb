use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mteq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mteq"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MTEQ_OUT_DIR")
        .output()
        .expect("spawn mteq")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

/// Trace CSV with the `time_s` column removed.
fn trace_without_time(dir: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
    let mut lines = text.lines().map(|l| l.split(',').map(String::from).collect::<Vec<_>>());
    let header = lines.next().unwrap();
    let t = header.iter().position(|h| h == "time_s").unwrap();
    std::iter::once(header)
        .chain(lines)
        .map(|mut row| {
            row.remove(t);
            row
        })
        .collect()
}

fn last_exact_residual(dir: &Path) -> f64 {
    let rows = trace_without_time(dir);
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let (kind, res) = (col("res_kind"), col("res_rel"));
    rows[1..].iter().rev().find(|r| r[kind] == "exact").unwrap()[res].parse().unwrap()
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = mteq(&["verify"], dir.path());
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{out}");
    assert_eq!(out.lines().filter(|l| l.contains("PASS")).count(), 5, "{out}");
}

#[test]
fn generate_families() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = mteq(&["generate", "--family", "fd-diffusion", "--n", "200", "--alpha", "10", "--lk", "3", "--out", "fd"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&std::fs::read_to_string(d.join("fd/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["terms"].as_array().unwrap().len(), 8);

    let o = mteq(&["generate", "--family", "stoch-galerkin", "--q", "4", "--p", "3", "--n", "32", "--out", "sg"], d);
    assert_eq!(code(&o), 0);
    let m: Value = serde_json::from_str(&std::fs::read_to_string(d.join("sg/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["cols"], 35);

    for out in ["s1", "s2"] {
        let o = mteq(&["generate", "--family", "synthetic", "--m", "6", "--n", "6", "--l", "3", "--problem-seed", "1", "--out", out], d);
        assert_eq!(code(&o), 0);
    }
    let a = std::fs::read(d.join("s1/manifest.json")).unwrap();
    assert_eq!(a, std::fs::read(d.join("s2/manifest.json")).unwrap());
}

#[test]
fn imported_instance_solves_like_generated_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = ["--family", "synthetic", "--m", "12", "--n", "10", "--l", "3", "--problem-seed", "4"];
    let mut args = vec!["generate"];
    args.extend(gen);
    args.extend(["--out", "inst"]);
    assert_eq!(code(&mteq(&args, d)), 0);

    let solve = ["--solver", "rram", "--precond", "p1", "--tol", "1e-9", "--seed", "7"];
    let mut a = vec!["solve"];
    a.extend(gen);
    a.extend(solve);
    a.extend(["--out", "mem"]);
    assert_eq!(code(&mteq(&a, d)), 0);
    let mut b = vec!["solve", "--import", "inst"];
    b.extend(solve);
    b.extend(["--out", "disk"]);
    assert_eq!(code(&mteq(&b, d)), 0);
    assert_eq!(trace_without_time(&d.join("mem")), trace_without_time(&d.join("disk")));

    let s = summary(&d.join("mem"));
    assert_eq!(s["status"], "converged");
    assert_eq!(s["seed"], 7);
    assert_eq!(s["config"]["problem"]["m"], 12);
    assert_eq!(s["final_res"].as_f64().unwrap(), last_exact_residual(&d.join("mem")));
    assert!(s["final_res"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn config_file_runs_are_deterministic_and_comparable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"problem": {"family": "fd-diffusion", "n": 30}, "solver": "rnlcg", "rank": 6, "precond": "p2", "tol": 1e-3, "seed": 3}"#;
    std::fs::write(d.join("a.json"), cfg).unwrap();
    std::fs::write(d.join("b.json"), cfg.replace("\"p2\"", "\"p1\"")).unwrap();
    std::fs::write(d.join("c.json"), cfg).unwrap();
    let o = mteq(&["solve", "--config", "a.json", "--config", "b.json", "--config", "c.json", "--jobs", "3", "--out", "runs"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let runs = d.join("runs");
    assert_eq!(trace_without_time(&runs.join("run0")), trace_without_time(&runs.join("run2")));

    let o = mteq(&["compare", "runs/run0", "runs/run1", "runs/run2/summary.json", "--out", "cmp.csv"], d);
    assert_eq!(code(&o), 0);
    let table = std::fs::read_to_string(d.join("cmp.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["run", "solver", "precond", "status", "iters", "time_s", "final_rank", "final_res"]);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[1][2], "p2");
    assert_eq!(rows[2][2], "p1");
    // Identical runs differ only in name and time.
    assert_eq!(rows[1][1..5], rows[3][1..5]);
    assert_eq!(rows[1][6..], rows[3][6..]);

    // Flags override every config.
    let o = mteq(&["solve", "--config", "a.json", "--config", "b.json", "--tol", "1e-2", "--out", "loose"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(summary(&d.join("loose/run1"))["config"]["tol"], 1e-2);
}

#[test]
fn unit_tolerance_converges_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let o = mteq(&["solve", "--family", "fd-diffusion", "--n", "40", "--solver", "trunc_cg", "--tol", "1", "--out", "r"], dir.path());
    assert_eq!(code(&o), 0);
    let s = summary(&dir.path().join("r"));
    assert_eq!(s["status"], "converged");
    assert!(s["iters"].as_u64().unwrap() <= 1);
}

#[test]
fn rank_capped_truncated_cg_reports_stagnation() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--family", "fd-diffusion", "--n", "200", "--solver", "trunc_cg", "--precond", "p2", "--rank-cap", "12", "--out", "r"];
    let o = mteq(&args, dir.path());
    assert_eq!(code(&o), 2);
    let s = summary(&dir.path().join("r"));
    assert_eq!(s["status"], "stagnation");
    assert!(s["final_res"].as_f64().unwrap() > 1e-6);
    assert!(s["final_rank"].as_u64().unwrap() <= 12);
}

#[test]
fn invalid_configs_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"solver": "rnlcg", "rnak": 3}"#).unwrap();
    for args in [
        vec!["solve", "--config", "bad.json"],
        vec!["solve", "--solver", "trunc_cg", "--precond", "tangadi"],
        vec!["solve", "--family", "fd-diffusion", "--n", "10", "--precond", "p2", "--metric", "standard", "--solver", "rnlcg"],
        vec!["solve", "--family", "identity", "--precond", "p1"],
        vec!["solve", "--tol=-1"],
        vec!["solve", "--no-such-flag"],
        vec!["compare", "bad.json", "bad.json"],
        vec!["compare", "bad.json"],
    ] {
        let o = mteq(&args, d);
        assert_eq!(code(&o), 3, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn io_failures_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["solve", "--import", "missing"],
        vec!["solve", "--config", "missing.json"],
        vec!["compare", "missing1", "missing2"],
    ] {
        assert_eq!(code(&mteq(&args, dir.path())), 4, "{args:?}");
    }
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mteq"))
        .args(["solve", "--family", "synthetic", "--solver", "rram", "--precond", "p1", "--tol", "1e-8"])
        .current_dir(dir.path())
        .env("MTEQ_OUT_DIR", dir.path().join("envout"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("envout/trace.csv").exists());
    assert!(dir.path().join("envout/summary.json").exists());
}
