//! End-to-end behaviour of the `msmpolicy` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msmpolicy"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, value: Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, value.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_csv(path: impl AsRef<Path>) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Simulated design data of size `n` in `dir/data`.
fn design_data(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let cfg = write_config(dir, "sim.json", json!({"dgp": {"n": n}, "seed": seed}));
    ok(dir, &["simulate", "--config", &cfg, "--with-truth", "--out-dir", "data"]);
    dir.join("data/data.csv")
}

#[test]
fn simulate_is_deterministic_and_consistent_with_truth() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), "sim.json", json!({"dgp": {"n": 5}}));
    ok(t.path(), &["simulate", "--config", &cfg, "--seed", "7", "--with-truth", "--out-dir", "a"]);
    ok(t.path(), &["simulate", "--config", &cfg, "--seed", "7", "--out-dir", "b"]);
    let a = std::fs::read(t.path().join("a/data.csv")).unwrap();
    assert_eq!(a, std::fs::read(t.path().join("b/data.csv")).unwrap());

    let (header, data) = read_csv(t.path().join("a/data.csv"));
    assert_eq!(header, ["y", "a", "x1", "x2"]);
    assert_eq!(data.len(), 5);
    let (theader, truth) = read_csv(t.path().join("a/truth.csv"));
    assert_eq!(theader, ["y0", "y1", "u"]);
    for (d, tr) in data.iter().zip(&truth) {
        assert_eq!(d[0], d[1] * tr[1] + (1.0 - d[1]) * tr[0]);
    }
}

#[test]
fn simulated_covariate_means_match_design() {
    let t = TempDir::new().unwrap();
    design_data(t.path(), 100_000, 3);
    let (_, rows) = read_csv(t.path().join("data/data.csv"));
    let n = rows.len() as f64;
    for (col, target) in [(2, -1.0), (3, 1.0)] {
        let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - target).abs() < 3.0 * sd / n.sqrt(), "column {col}: mean {mean}");
    }
}

#[test]
fn fit_reports_reduction_and_is_reproducible() {
    let t = TempDir::new().unwrap();
    let data = design_data(t.path(), 400, 1);
    let cfg = write_config(
        t.path(),
        "fit.json",
        json!({"data": data, "method": "mmw", "log_lambda": 0.0,
               "class": {"class": "quadrant", "i": 0, "j": 1}, "nuisance": {"k": 5}}),
    );
    ok(t.path(), &["fit", "--config", &cfg, "--out-dir", "f1", "--threads", "1"]);
    ok(t.path(), &["fit", "--config", &cfg, "--out-dir", "f2", "--threads", "2"]);
    let p1 = std::fs::read(t.path().join("f1/policy.json")).unwrap();
    assert_eq!(p1, std::fs::read(t.path().join("f2/policy.json")).unwrap());
    assert_eq!(
        std::fs::read(t.path().join("f1/scores.csv")).unwrap(),
        std::fs::read(t.path().join("f2/scores.csv")).unwrap()
    );
    let report = read_json(t.path().join("f1/fit_report.json"));
    assert_eq!(report["reduces_to_aw"], true);
    assert!(report["estimate"]["se"].as_f64().unwrap() > 0.0);
    assert!(report["nuisance"]["propensity"].as_array().unwrap().len() == 2);
    assert!(report["wall_seconds"].as_f64().is_some());
    let policy = read_json(t.path().join("f1/policy.json"));
    assert_eq!(policy["kind"], "quadrant");
    assert_eq!(policy["m"], 2);
}

#[test]
fn mmi_never_treats_when_every_improvement_is_negative() {
    let t = TempDir::new().unwrap();
    // Constant outcome with a treatment cost: every nuisance fit is exact, so
    // phi_1^- - phi_0^+ < 0 holds unit by unit rather than only on average.
    let (header, rows) = read_csv(design_data(t.path(), 300, 2));
    let mut text = header.join(",") + "\n";
    for row in &rows {
        let rest: Vec<String> = row[1..].iter().map(f64::to_string).collect();
        text += &format!("1,{}\n", rest.join(","));
    }
    std::fs::write(t.path().join("flat.csv"), text).unwrap();
    let cfg = write_config(
        t.path(),
        "fit.json",
        json!({"data": "flat.csv", "method": "mmi", "log_lambda": 0.5, "treated_cost": 2.0,
               "class": {"class": "tree", "depth": 2}, "nuisance": {"k": 5}}),
    );
    ok(t.path(), &["fit", "--config", &cfg, "--out-dir", "f"]);
    let (_, scores) = read_csv(t.path().join("f/scores.csv"));
    // Long format: unit, arm, phi_minus, phi_plus; arm 0 then arm 1 per unit.
    for unit in scores.chunks(2) {
        assert!(unit[1][2] - unit[0][3] < 0.0, "phi_minus_1 - phi_plus_0 must be negative for unit {}", unit[0][0]);
    }
    let report = read_json(t.path().join("f/fit_report.json"));
    assert_eq!(report["treated_fraction"], 0.0);
    assert_eq!(report["reduces_to_aw"], false);
}

#[test]
fn evaluate_scores_a_saved_policy() {
    let t = TempDir::new().unwrap();
    let data = design_data(t.path(), 300, 4);
    std::fs::write(t.path().join("all.json"), r#"{"kind":"constant","m":2,"params":{"arm":1}}"#).unwrap();
    std::fs::write(t.path().join("none.json"), r#"{"kind":"constant","m":2,"params":{"arm":0}}"#).unwrap();
    let cfg = write_config(
        t.path(),
        "ev.json",
        json!({"data": data, "policy": "all.json", "baseline": "none.json", "log_lambda": 1.0,
               "nuisance": {"learner": "oracle"}, "dgp": {}, "oracle_n": 20000}),
    );
    ok(t.path(), &["evaluate", "--config", &cfg, "--out-dir", "e"]);
    let r = read_json(t.path().join("e/evaluation.json"));
    assert_eq!(r["treated_fraction"], 1.0);
    assert_eq!(r["worst_case_improvement"], r["worst_case_improvement_vs_baseline"]);
    assert_eq!(r["oracle"]["treated_frac"], 1.0);
}

#[test]
fn bounds_columns_and_nesting() {
    let t = TempDir::new().unwrap();
    let data = design_data(t.path(), 200, 5);
    let grid = [0.0, 0.5, 1.5];
    let cfg = write_config(
        t.path(),
        "b.json",
        json!({"data": data, "log_lambda_grid": grid, "nuisance": {"learner": "oracle"}, "dgp": {}}),
    );
    ok(t.path(), &["bounds", "--config", &cfg, "--out-dir", "b"]);
    let tables: Vec<Vec<Vec<f64>>> = grid
        .iter()
        .map(|l| {
            let (header, rows) = read_csv(t.path().join(format!("b/bounds_log_lambda_{l}.csv")));
            assert_eq!(header, ["unit", "mu_lo_1", "mu_hi_1", "mu_lo_0", "mu_hi_0", "tau_lo", "tau_hi"]);
            rows
        })
        .collect();
    for r in &tables[0] {
        assert!((r[5] - r[6]).abs() <= 1e-12);
    }
    for table in &tables {
        for r in table {
            assert_eq!(r[5], r[1] - r[4]);
            assert_eq!(r[6], r[2] - r[3]);
        }
    }
    for pair in tables.windows(2) {
        for (narrow, wide) in pair[0].iter().zip(&pair[1]) {
            assert!(wide[5] <= narrow[5] && narrow[6] <= wide[6], "unit {}", narrow[0]);
        }
    }
}

#[test]
fn bounds_at_unit_lambda_are_points_with_learned_nuisances() {
    let t = TempDir::new().unwrap();
    let data = design_data(t.path(), 300, 6);
    let cfg = write_config(t.path(), "b.json", json!({"data": data, "log_lambda_grid": [0.0], "nuisance": {"k": 3}}));
    ok(t.path(), &["bounds", "--config", &cfg, "--out-dir", "b"]);
    let (_, rows) = read_csv(t.path().join("b/bounds_log_lambda_0.csv"));
    assert!(rows.iter().all(|r| (r[5] - r[6]).abs() <= 1e-12));
}

#[test]
fn sweep_writes_rows_and_well_formed_charts() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(
        t.path(),
        "sw.json",
        json!({"reps": 1, "log_lambda_grid": [1.0], "n": 400, "eval_n": 2000, "regret_fit_n": 1000}),
    );
    ok(t.path(), &["sweep", "--config", &cfg, "--out-dir", "s"]);
    let (header, rows) = read_csv_text(t.path().join("s/sweep.csv"));
    assert_eq!(header[..3], ["log_lambda", "rep", "method"]);
    assert_eq!(rows.len(), 3);
    for metric in ["treated_frac", "exp_welfare", "worst_welfare", "worst_improvement"] {
        let text = std::fs::read_to_string(t.path().join(format!("s/{metric}.svg"))).unwrap();
        let doc = roxmltree::Document::parse(&text).expect("well-formed SVG");
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(doc.root_element().attribute("viewBox"), Some("0 0 800 500"));
    }
}

fn read_csv_text(path: impl AsRef<Path>) -> (Vec<String>, Vec<csv::StringRecord>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (header, r.records().map(Result::unwrap).collect())
}

#[test]
fn selfcheck_passes_and_catches_a_flipped_sign() {
    let t = TempDir::new().unwrap();
    let out = run(t.path(), &["selfcheck", "--smoke", "--out-dir", "ok"]);
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(t.path().join("ok/selfcheck.json"));
    assert_eq!(report["passed"], true);
    assert!(report["suites"].as_array().unwrap().len() >= 4);

    let out = run(t.path(), &["selfcheck", "--smoke", "--corrupt-sign", "--out-dir", "bad"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("failing check: closed_form_vs_lp/"), "{stderr}");
}

#[test]
fn exit_codes_and_no_partial_output() {
    let t = TempDir::new().unwrap();
    let bad = write_config(t.path(), "bad.json", json!({"seed": 1, "sede": 2}));
    assert_eq!(run(t.path(), &["simulate", "--config", &bad, "--out-dir", "o"]).status.code(), Some(1));
    assert_eq!(run(t.path(), &["frobnicate"]).status.code(), Some(1));

    let missing = write_config(
        t.path(),
        "fit.json",
        json!({"data": "nope.csv", "class": {"class": "quadrant", "i": 0, "j": 1}}),
    );
    assert_eq!(run(t.path(), &["fit", "--config", &missing, "--out-dir", "o"]).status.code(), Some(2));

    std::fs::write(t.path().join("ragged.csv"), "y,a,x1\n1.0,0,2.0\n2.0,1\n").unwrap();
    let ragged = write_config(
        t.path(),
        "fit2.json",
        json!({"data": "ragged.csv", "class": {"class": "quadrant", "i": 0, "j": 1}}),
    );
    assert_eq!(run(t.path(), &["fit", "--config", &ragged, "--out-dir", "o"]).status.code(), Some(2));

    let three_arm_quadrant = write_config(
        t.path(),
        "fit3.json",
        json!({"data": "ragged.csv", "m": 3, "class": {"class": "quadrant", "i": 0, "j": 1}}),
    );
    assert_eq!(run(t.path(), &["fit", "--config", &three_arm_quadrant, "--out-dir", "o"]).status.code(), Some(1));
    assert!(!t.path().join("o").exists(), "failed runs must not leave output");
}

#[test]
fn threads_env_fallback_is_validated() {
    let t = TempDir::new().unwrap();
    let out = bin()
        .current_dir(t.path())
        .env("MSMPOLICY_THREADS", "zero")
        .args(["simulate", "--out-dir", "o"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().current_dir(t.path()).env("MSMPOLICY_THREADS", "2").args(["simulate", "--out-dir", "o"]).output().unwrap();
    assert!(out.status.success());
}
