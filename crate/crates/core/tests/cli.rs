mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ospca::io::{read_basis, read_dataset, read_vector};
use serde_json::Value;

use common::*;

fn ospca(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ospca"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = ospca(args, out);
    assert!(
        o.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ospca(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(
        ospca(&["no-such-command"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(
        ospca(&["pca", "--set", "pca.bogus=1"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        ospca(&["pca", "--set", "pca.threshold=1.5"], dir.path())
            .status
            .code(),
        Some(1)
    );
    let blown = ospca(
        &[
            "descend",
            "--set",
            "descend.lr=1e6",
            "--set",
            "descend.basis=pca",
        ],
        dir.path(),
    );
    assert_eq!(
        blown.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&blown.stderr)
    );
}

#[test]
fn gspca_without_sensitivity_writes_the_pca_basis() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["pca"], a.path());
    ok(&["gspca", "--set", "gs.eps_scaled=0"], b.path());
    assert_eq!(
        fs::read(a.path().join("basis_pca.txt")).unwrap(),
        fs::read(b.path().join("basis_gspca.txt")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("spectrum_pca.csv")).unwrap(),
        fs::read(b.path().join("spectrum_gspca.csv")).unwrap()
    );
}

#[test]
fn train_report_matches_recomputation_from_persisted_files() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["train-scores"], dir.path());
    let d = dir.path();
    let rows = csv_rows(&d.join("train_scores.csv"));
    assert_eq!(rows.len(), 7);
    assert_eq!(
        stdout,
        fs::read_to_string(d.join("train_scores.csv")).unwrap()
    );

    let samples = read_dataset(&d.join("train_dataset.csv")).unwrap();
    let j = read_vector(&d.join("gradient_central.txt")).unwrap();
    for row in &rows {
        let n1: usize = row[1].parse().unwrap();
        let slug = match row[2].as_str() {
            "PCA" => "pca",
            "GS-PCA" => "gspca",
            "aGS-PCA" => "agspca",
            "eGS-PCA" => "egspca",
            other => panic!("unexpected algorithm {other}"),
        };
        let basis = read_basis(&d.join(format!("basis_{slug}.txt"))).unwrap();
        let (c, f) = span_scores(&basis, &samples, n1, &j);
        let reported_f: f64 = row[4].parse().unwrap();
        let reported_c: f64 = row[5].parse().unwrap();
        assert!(rel_err(f, reported_f) < 1e-8, "{row:?}: field {f}");
        assert!(rel_err(c, reported_c) < 1e-6, "{row:?}: objective {c}");
        let omega: f64 = row[3].parse().unwrap();
        let total: f64 = basis.singular_values.iter().sum();
        let partial: f64 = basis.singular_values[..n1].iter().sum();
        assert!(rel_err(omega, partial / total) < 1e-12);
    }

    let report: Value =
        serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["train"]["train"].as_array().unwrap().len(), 7);
    assert_eq!(report["train"]["n"], 6);
    assert!(report["config"].is_object());
}

#[test]
fn test_report_rows_are_consistent_across_gradients() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["test-scores"], dir.path());
    let rows = csv_rows(&dir.path().join("test_scores.csv"));
    let pick = |g: &str, alg: &str, n1: &str| {
        rows.iter()
            .find(|r| r[1] == g && r[3] == alg && r[2] == n1)
            .unwrap_or_else(|| panic!("missing {g} {alg} {n1}"))
            .clone()
    };
    for n1 in ["6", "9"] {
        assert_eq!(
            pick("central", "PCA", n1)[4..],
            pick("directional", "PCA", n1)[4..]
        );
    }
    let pca = pick("directional", "PCA", "6");
    let ags = pick("directional", "aGS-PCA", "6");
    for k in [4, 5] {
        let (a, b): (f64, f64) = (pca[k].parse().unwrap(), ags[k].parse().unwrap());
        assert!(rel_err(a, b) < 1e-8);
    }
    assert!(dir
        .path()
        .join("projection_directional_gspca_6.pgm")
        .exists());
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let cos = report["test"]["gradient_cosine"].as_f64().unwrap();
    assert!(cos.abs() < 1.0);
}

#[test]
fn reports_from_both_experiments_share_one_file() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train-scores"], dir.path());
    ok(&["test-scores"], dir.path());
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["train"].is_object() && report["test"].is_object());
}

#[test]
fn generate_and_simulate_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate", "--set", "train.count=12"], dir.path());
    let samples = read_dataset(&dir.path().join("train_dataset.csv")).unwrap();
    assert_eq!((samples.dim(), samples.count()), (441, 12));
    let pgm = fs::read_to_string(dir.path().join("field_train_0.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n") && pgm.contains("\n21 21\n"));

    ok(&["simulate"], dir.path());
    let truth = csv_rows(&dir.path().join("rates_truth.csv"));
    assert_eq!(truth.len(), 5);
    assert!(dir.path().join("case.txt").exists());
}

#[test]
fn seed_flag_changes_the_data() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(
        &["generate", "--set", "train.count=4", "--seed", "1"],
        a.path(),
    );
    ok(
        &["generate", "--set", "train.count=4", "--seed", "2"],
        b.path(),
    );
    assert_ne!(
        fs::read(a.path().join("train_dataset.csv")).unwrap(),
        fs::read(b.path().join("train_dataset.csv")).unwrap()
    );
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# smaller run\ntrain.count = 60\npca.threshold = 0.9\n",
    )
    .unwrap();
    let stdout = ok(&["pca", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(stdout.contains("threshold 0.9"), "{stdout}");
    let spectrum = csv_rows(&dir.path().join("spectrum_pca.csv"));
    assert!(spectrum.len() <= 60);
}

#[test]
fn descent_lowers_the_objective() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &[
            "descend",
            "--set",
            "descend.steps=10",
            "--set",
            "descend.basis=pca",
        ],
        dir.path(),
    );
    let rows = csv_rows(&dir.path().join("descent.csv"));
    assert_eq!(rows.len(), 11);
    let first: f64 = rows[0][1].parse().unwrap();
    let last: f64 = rows[10][1].parse().unwrap();
    assert!(last < first, "{first} -> {last}");
}
