use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn meshcrit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshcrit"))
        .args(args)
        .env("MESHCRIT_OUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_dirs(root: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(root)
        .map(|d| d.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

fn jsonl(dir: &Path) -> Vec<Value> {
    fs::read_to_string(dir.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn csv_rows(dir: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("records.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn printed(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in output:\n{out}"))
        .trim()
        .parse()
        .unwrap()
}

const SMALL: [&str; 8] = ["--nx", "8", "--nz", "6", "--hx", "0.8", "--hz", "0.5"];

#[test]
fn solve_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--Z", "1.0"];
    args.extend(SMALL);
    let o = meshcrit(tmp.path(), &args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let out = stdout(&o);
    let e = printed(&out, "E ");
    assert!(e < -0.52 && e > -0.53, "{e}");

    let dirs = run_dirs(tmp.path());
    assert_eq!(dirs.len(), 1);
    let dir = &dirs[0];
    for f in ["records.jsonl", "records.csv", "run.json", "config.txt"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let recs = jsonl(dir);
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    for key in [
        "Z",
        "lambda",
        "spec",
        "energy_scaled",
        "energy",
        "ionization",
        "residual",
        "iterations",
        "wall_time_seconds",
    ] {
        assert!(r.get(key).is_some(), "record lacks {key}");
    }
    // printed, line-delimited and tabular values are the same double
    assert_eq!(r["energy"].as_f64().unwrap().to_bits(), e.to_bits());
    let rows = csv_rows(dir);
    assert_eq!(
        rows[0].join(","),
        "Z,lambda,Nx,Ny,Nz,hx,hy,hz,energy,ionization,residual,iterations,wall_s,stab_digits"
    );
    let row = &rows[1];
    assert_eq!(row[8].parse::<f64>().unwrap().to_bits(), e.to_bits());
    assert_eq!(
        row[9].parse::<f64>().unwrap().to_bits(),
        r["ionization"].as_f64().unwrap().to_bits()
    );
    assert_eq!(row[2..5], ["8", "8", "6"]);
    assert_eq!(row[13], "-1");

    let meta: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    for key in ["command_line", "config", "version", "started", "finished"] {
        assert!(meta.get(key).is_some(), "run.json lacks {key}");
    }
}

#[test]
fn scaled_solve_at_zero_coupling() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meshcrit(
        tmp.path(),
        &[
            "solve", "--lambda", "0", "--nx", "12", "--nz", "8", "--hx", "1", "--hz", "1",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let e = printed(&stdout(&o), "E~");
    assert!((e + 1.0).abs() < 1e-4, "{e}");
}

#[test]
fn invalid_invocations_exit_64() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 7] = [
        &["solve", "--Z", "1.0", "--nx", "0", "--ny", "0", "--nz", "4"],
        &["solve", "--Z", "1.0", "--lambda", "1.0"],
        &["solve", "--Z", "abc"],
        &["solve", "--Z", "1.0", "--bogus", "1"],
        &["scan", "--Z", "1.0", "--nx", "50:20:10"],
        &["critical", "--bracket", "1.2:1.1"],
        &["frobnicate"],
    ];
    for args in cases {
        let o = meshcrit(tmp.path(), args);
        assert_eq!(o.status.code(), Some(64), "{args:?}");
    }
    let o = meshcrit(tmp.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn scan_covers_the_cartesian_product() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meshcrit(
        tmp.path(),
        &[
            "scan", "--Z", "1.0", "--nx", "4:8:2", "--nz", "4:6:2", "--hx", "0.8", "--hz", "0.5",
        ],
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let dir = &run_dirs(tmp.path())[0];
    let rows = csv_rows(dir);
    assert_eq!(rows.len(), 1 + 6);
    let recs = jsonl(dir);
    assert_eq!(recs.len(), 6);
    for (row, rec) in rows[1..].iter().zip(&recs) {
        assert_eq!(
            row[8].parse::<f64>().unwrap().to_bits(),
            rec["energy"].as_f64().unwrap().to_bits()
        );
        assert_eq!(row[13], rec["stab_digits"].to_string());
    }
    // the largest lattice sits last and agrees with its neighbour to a few decimals
    let last = rows.last().unwrap();
    assert_eq!(last[2..5], ["8", "8", "6"]);
    assert!(last[13].parse::<i32>().unwrap() >= 2);
}

#[test]
fn critical_without_sign_change_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let o = meshcrit(
        tmp.path(),
        &[
            "critical",
            "--bracket",
            "1.3:1.4",
            "--nx",
            "8",
            "--nz",
            "6",
            "--hx",
            "2.4",
            "--hz",
            "0.4",
        ],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
}

#[test]
fn coarse_critical_search_needs_fewer_evaluations() {
    let tmp = tempfile::tempdir().unwrap();
    let base = [
        "critical", "--nx", "10", "--nz", "8", "--hx", "2.4", "--hz", "0.4",
    ];
    let count = |tol: &str| {
        let root = tmp.path().join(tol);
        let mut args = base.to_vec();
        args.extend(["--tol-i", tol, "--tol-lambda", "0"]);
        let o = meshcrit(&root, &args);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        let out = stdout(&o);
        let z = printed(&out, "Z_cr");
        assert!(z > 0.89 && z < 0.96, "{z}");
        jsonl(&run_dirs(&root)[0]).len()
    };
    let coarse = count("1e-6");
    let fine = count("1e-11");
    assert!(coarse < fine, "{coarse} vs {fine}");
}

#[test]
fn selftest_passes_and_detects_a_bad_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let a = meshcrit(tmp.path(), &["selftest"]);
    let b = meshcrit(tmp.path(), &["selftest"]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    let names = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .filter(|l| l.contains("PASS") || l.contains("FAIL"))
            .map(|l| l.split_whitespace().next().unwrap().to_string())
            .collect()
    };
    assert_eq!(names(&a).len(), 5);
    assert_eq!(names(&a), names(&b));
    let bad = meshcrit(tmp.path(), &["selftest", "--perturb-weight", "1e-6"]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(stdout(&bad)
        .lines()
        .any(|l| l.starts_with("quadrature-exactness") && l.contains("FAIL")));
}

#[test]
fn config_snapshot_replays_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let mut args = vec!["solve", "--threads", "1", "--Z", "0.95"];
    args.extend(SMALL);
    let o = meshcrit(&first, &args);
    assert_eq!(o.status.code(), Some(0));
    let e1 = printed(&stdout(&o), "E ");
    let snap = run_dirs(&first)[0].join("config.txt");

    let second = tmp.path().join("second");
    let snap_arg = snap.to_str().unwrap();
    let o = meshcrit(&second, &["solve", "--config", snap_arg]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let e2 = printed(&stdout(&o), "E ");
    assert!((e1 - e2).abs() <= 1e-13, "{e1} {e2}");

    // flags override the file
    let third = tmp.path().join("third");
    let o = meshcrit(&third, &["solve", "--config", snap_arg, "--nz", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let rows = csv_rows(&run_dirs(&third)[0]);
    assert_eq!(rows[1][4], "4");
}

#[test]
fn runs_never_share_a_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["solve", "--Z", "1", "--nx", "3", "--nz", "3"];
    for _ in 0..3 {
        assert_eq!(meshcrit(tmp.path(), &args).status.code(), Some(0));
    }
    assert_eq!(run_dirs(tmp.path()).len(), 3);
}

#[test]
fn non_convergence_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["solve", "--Z", "1.0", "--maxiter", "2"];
    args.extend(SMALL);
    let o = meshcrit(tmp.path(), &args);
    assert_eq!(o.status.code(), Some(2));
    let recs = jsonl(&run_dirs(tmp.path())[0]);
    assert_eq!(recs[0]["converged"], Value::Bool(false));
}
