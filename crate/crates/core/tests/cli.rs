use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_freefront");

const DETERMINISTIC: &str = r#"
[model]
H0 = 3.0
u0 = "cosine-bump"
alpha = 1.0
beta = 1.0
D = { kind = "point", value = 1.0 }
eta = { kind = "point", value = 1.0 }

[grid]
M = 50
T = 10.0
"#;

const SMALL_RANDOM: &str = r#"
[model]
H0 = 3.0
u0 = "parabolic-bump"
alpha = { kind = "rational-affine", p = 2.0, q = 3.0, s = 2.0, t = 2.0 }
beta = { kind = "rational-affine", p = 2.0, q = 1.0, s = 2.0, t = 2.0 }
D = { kind = "truncated-normal", mean = 1.0, std = 0.1, lo = 0.8, hi = 1.2 }
eta = { kind = "truncated-beta", a = 2.0, b = 4.0, lo = 1.6, hi = 2.4 }

[grid]
M = 16
T = 0.1

[mc]
K = 12
seed = 5

[compare]
K = [4, 8]

[convergence]
K = [4, 8]
M = [8, 16]
M_steps = 2000
N = [1000, 2000]
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("cfg.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("FREEFRONT_WORKERS")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn stability_prints_both_limits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DETERMINISTIC);
    let out = dir.path().join("out");
    let stdout = ok(&[
        "stability",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("FF k-limit: 1.5949e-3"), "{stdout}");
    assert!(stdout.contains("FT k-limit: 8.9543e-4"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("stability.json")).unwrap()).unwrap();
    assert!((json["ft_limit"].as_f64().unwrap() - 8.9543e-4).abs() < 1e-7);
}

#[test]
fn rstar_prints_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        SMALL_RANDOM
            .replace(
                "alpha = { kind = \"rational-affine\", p = 2.0, q = 3.0, s = 2.0, t = 2.0 }",
                "alpha = 1.0",
            )
            .as_str(),
    );
    let out = dir.path().join("out");
    let stdout = ok(&[
        "rstar",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(stdout.contains("guaranteed: true, R*_max = 2.6344"), "{stdout}");
    assert!(out.join("rstar.json").exists());
}

#[test]
fn solve_ff_at_zero_horizon_returns_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DETERMINISTIC);
    let out = dir.path().join("out");
    ok(&[
        "solve-ff",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--T",
        "0",
    ]);
    let mut rdr = csv::Reader::from_path(out.join("profile.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 51);
    for row in &rows {
        let r: f64 = row[1].parse().unwrap();
        let u: f64 = row[2].parse().unwrap();
        assert!((u - (std::f64::consts::PI * r / 6.0).cos()).abs() < 1e-15, "{r} {u}");
    }
    let front = fs::read_to_string(out.join("front.csv")).unwrap();
    assert_eq!(front.lines().count(), 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["final_front"].as_f64(), Some(3.0));
}

#[test]
fn rerun_from_manifest_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RANDOM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "ensemble",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
        "--seed",
        "11",
        "--workers",
        "2",
    ]);
    ok(&[
        "rerun",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    for f in ["ensemble_u.csv", "ensemble_h.csv", "outcomes.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // the manifest as a --config also reproduces the run
    let c = dir.path().join("c");
    ok(&[
        "ensemble",
        "--config",
        a.join("manifest.json").to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
        "--workers",
        "1",
    ]);
    assert_eq!(
        fs::read(a.join("ensemble_h.csv")).unwrap(),
        fs::read(c.join("ensemble_h.csv")).unwrap()
    );
}

#[test]
fn empty_config_names_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let o = run(&[
        "solve-ff",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("model.H0") && err.contains("grid.T"), "{err}");
}

#[test]
fn unstable_step_reports_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), DETERMINISTIC);
    let o = run(&[
        "solve-ft",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
        "--N",
        "100",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr).to_lowercase();
    assert!(err.contains("stab"), "{err}");
}

#[test]
fn compare_convergence_and_histogram_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RANDOM);
    let c = cfg.to_str().unwrap();
    let out = dir.path().join("cmp");
    let stdout = ok(&["compare", "--config", c, "--out", out.to_str().unwrap()]);
    assert!(stdout.contains("K = 8: RelErr"), "{stdout}");
    assert_eq!(fs::read_to_string(out.join("relerr.csv")).unwrap().lines().count(), 3);
    assert!(out.join("absdev_K4.csv").exists());

    let out = dir.path().join("conv");
    ok(&["convergence", "--config", c, "--out", out.to_str().unwrap()]);
    for f in ["convergence_K.csv", "convergence_M.csv", "convergence_N.csv"] {
        assert_eq!(fs::read_to_string(out.join(f)).unwrap().lines().count(), 2, "{f}");
    }

    let out = dir.path().join("hist");
    ok(&["histogram", "--config", c, "--out", out.to_str().unwrap()]);
    let total: usize = csv::Reader::from_path(out.join("histogram_D.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[2].parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "histogram");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 4);
}

#[test]
fn workers_env_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_RANDOM);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&[
        "ensemble",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap(),
        "--method",
        "ft",
    ]);
    let o = Command::new(BIN)
        .args([
            "ensemble",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            b.to_str().unwrap(),
            "--method",
            "ft",
        ])
        .env("FREEFRONT_WORKERS", "3")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        fs::read(a.join("ensemble_u.csv")).unwrap(),
        fs::read(b.join("ensemble_u.csv")).unwrap()
    );
}
