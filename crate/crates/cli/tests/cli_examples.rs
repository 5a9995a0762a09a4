use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn klcyl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_klcyl")).args(args).arg("--out").arg(out).output().unwrap()
}

fn config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn classify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let good = klcyl(&["classify", "--field", "quadratic"], &out);
    assert_eq!(good.status.code(), Some(0), "{}", String::from_utf8_lossy(&good.stderr));
    assert!(out.join("point_class.json").is_file());

    for (alpha, beta, code) in [(-1.0, -0.5, 3), (-1.0, -1.0, 4), (-0.5, -0.5, 0)] {
        let cfg = config(
            &dir,
            "syn.toml",
            &format!("field = \"quadratic\"\n[classify.synthetic]\nalpha_power = {alpha}\nbeta_power = {beta}\n"),
        );
        let r = klcyl(&["classify", "--config", cfg.to_str().unwrap()], &out);
        assert_eq!(r.status.code(), Some(code), "alpha t^{alpha}, beta t^{beta}");
    }

    let starved = klcyl(&["classify", "--field", "quadratic", "--budget", "0"], &out);
    assert_eq!(starved.status.code(), Some(5));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(klcyl(&["flow", "--field", "no-such-field"], &out).status.code(), Some(2));
    let bad = config(&dir, "bad.toml", "field = \"disk\"\n[flow]\nspeed = 3\n");
    assert_eq!(klcyl(&["flow", "--config", bad.to_str().unwrap()], &out).status.code(), Some(2));
    let four = config(
        &dir,
        "four.toml",
        "name = \"q4\"\ndimension = 4\nbox = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]]\nf = \"x1^2 + x2^2 + x3^2 + x4^2\"\n[known_psi]\ncoefficient = 1.0\nexponent = 0.5\n",
    );
    let r = klcyl(&["cylinder", "--field", four.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn flow_writes_one_file_per_start() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let r = klcyl(&["flow", "--field", "disk", "--seed", "3"], &out);
    assert_eq!(r.status.code(), Some(0));
    for i in 0..5 {
        assert!(out.join(format!("traj_{i:03}.csv")).is_file());
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["summary"]["bound_violations"], 0);
    for row in csv_rows(&out.join("lengths.csv")) {
        assert!(row[2] <= row[3] + 1e-6);
    }
}

#[test]
fn envelope_dip_comb_stays_below() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let r = klcyl(&["envelope", "--field", "quadratic"], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let m = json(&out.join("manifest.json"));
    assert!(m["summary"]["side_violation"].as_f64().unwrap() <= 1e-9);
    assert!(out.join("envelope.csv").is_file() && out.join("trace.json").is_file());
}

#[test]
fn built_psi_is_square_root() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config(&dir, "d.toml", "field = \"quadratic\"\n[desing]\nmode = \"build-psi\"\na = \"2*sqrt(t)\"\nrho = 1.0\n");
    let r = klcyl(&["desing", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = csv_rows(&out.join("psi.csv"));
    assert_eq!(rows.len(), 64);
    for row in rows {
        assert!((row[1] - row[0].sqrt()).abs() <= 1e-6, "{row:?}");
    }
}

#[test]
fn levelset_alpha_on_quadratic() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let r = klcyl(&["levelset", "--field", "quadratic"], &out);
    assert_eq!(r.status.code(), Some(0));
    for row in csv_rows(&out.join("profile.csv")) {
        let want = 1.0 / (2.0 * row[0].sqrt());
        assert!((row[4] - want).abs() <= 1e-6 * want, "{row:?}");
    }
}

#[test]
fn cylinder_on_disk() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let cfg = config(&dir, "c.toml", "field = \"disk\"\n[cylinder]\ntrajectories = 60\ngrid_q = 8\ngrid_t = 8\n");
    let r = klcyl(&["cylinder", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let rep = json(&out.join("report.json"));
    assert_eq!(rep["single_crossing"], 60);
    assert_eq!(csv_rows(&out.join("h.csv")).len(), 60);
    assert_eq!(csv_rows(&out.join("grid.csv")).len(), 64);
}
