use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use svofuse::models::ModelSpec;
use svofuse::wavelet::default_levels;
use svofuse::{aggregate, modwt, optimal_coefficients, wccv_matrices, WeightVector};
use tempfile::TempDir;

fn svofuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_svofuse")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = svofuse(args);
    assert!(
        out.status.success(),
        "svofuse {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn write_csv(p: &Path, header: &str, rows: &[Vec<f64>]) {
    let mut text = format!("{header}\n");
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(p, text).unwrap();
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        run_ok(&["simulate", "--preset", "case1", "--T", "1024", "--seed", "7", "--out-dir", path(d)]);
    }
    let csv_a = fs::read(a.join("signals.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("signals.csv")).unwrap());
    assert_eq!(
        fs::read(a.join("signals.meta.json")).unwrap(),
        fs::read(b.join("signals.meta.json")).unwrap()
    );
    let text = String::from_utf8(csv_a).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1025);
    assert_eq!(lines[0], "s1,s2,s3,s4,s5,s6");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 6));
    let meta = read_json(&a.join("signals.meta.json"));
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["sample_rate_hz"], 10.0);
    assert_eq!(meta["model"]["kind"], "wn_rw");
}

#[test]
fn simulate_case2_has_six_columns() {
    let dir = TempDir::new().unwrap();
    run_ok(&["simulate", "--preset", "case2", "--T", "2048", "--out-dir", path(dir.path())]);
    let text = fs::read_to_string(dir.path().join("signals.csv")).unwrap();
    assert_eq!(text.lines().count(), 2049);
    assert!(text.lines().all(|l| l.split(',').count() == 6));
}

#[test]
fn noiseless_model_with_unit_drift_gives_all_ones() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("model.json");
    fs::write(
        &model,
        r#"{"kind": "wn_rw", "r": [0, 0, 0], "q": [[0, 0, 0], [0, 0, 0], [0, 0, 0]]}"#,
    )
    .unwrap();
    run_ok(&[
        "simulate", "--model", path(&model), "--delta", "1", "--T", "64", "--out-dir", path(dir.path()),
    ]);
    let text = fs::read_to_string(dir.path().join("signals.csv")).unwrap();
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            assert_eq!(cell.parse::<f64>().unwrap(), 1.0);
        }
    }
}

#[test]
fn exported_model_reloads() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    run_ok(&["simulate", "--preset", "case1", "--T", "256", "--seed", "3", "--export-model", "--out-dir", path(&a)]);
    assert!(a.join("model_R.csv").exists() && a.join("model_Q.csv").exists());
    let b = dir.path().join("b");
    run_ok(&["simulate", "--model", path(&a.join("model.json")), "--T", "256", "--seed", "3", "--out-dir", path(&b)]);
    assert_eq!(fs::read(a.join("signals.csv")).unwrap(), fs::read(b.join("signals.csv")).unwrap());
}

#[test]
fn round_trip_matches_in_memory_pipeline() {
    let dir = TempDir::new().unwrap();
    let n = 4096;
    run_ok(&["simulate", "--preset", "case1", "--T", "4096", "--seed", "11", "--out-dir", path(dir.path())]);
    let fit_dir = dir.path().join("fit");
    run_ok(&[
        "fit", "--input", path(&dir.path().join("signals.csv")), "--out-dir", path(&fit_dir),
    ]);
    let report = read_json(&fit_dir.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    let from_file = floats(&report["methods"][0]["coefficients"]);

    let signals = ModelSpec::preset("case1")
        .unwrap()
        .simulate(n, &mut ChaCha8Rng::seed_from_u64(11))
        .unwrap();
    let levels = default_levels(n);
    let pyr = modwt(&signals, levels).unwrap();
    let w = WeightVector::equal(levels);
    let sc = wccv_matrices(&pyr, &w).unwrap();
    let c = optimal_coefficients(&aggregate(&sc.per_level, &w).unwrap()).unwrap();
    for (a, b) in from_file.iter().zip(c.as_slice()) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert_eq!(report["scales"][0]["tau_samples"], 2);
    assert_eq!(report["scales"][0]["tau_seconds"], 0.2);
}

#[test]
fn identical_sensors_get_equal_coefficients() {
    let dir = TempDir::new().unwrap();
    let x = noise(512, 5);
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v, *v]).collect();
    let input = dir.path().join("twin.csv");
    write_csv(&input, "left,right", &rows);
    run_ok(&["fit", "--input", path(&input), "--out-dir", path(dir.path())]);
    let report = read_json(&dir.path().join("report.json"));
    let c = floats(&report["methods"][0]["coefficients"]);
    assert!((c[0] - 0.5).abs() < 1e-8 && (c[1] - 0.5).abs() < 1e-8, "{c:?}");
    assert_eq!(report["degenerate"], true);
}

#[test]
fn single_sensor_is_its_own_fusion() {
    let dir = TempDir::new().unwrap();
    let x = noise(256, 9);
    let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
    let input = dir.path().join("one.csv");
    write_csv(&input, "gyro", &rows);
    run_ok(&["fit", "--input", path(&input), "--out-dir", path(dir.path())]);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(floats(&report["methods"][0]["coefficients"]), vec![1.0]);
    let fused = floats(&report["methods"][0]["fused_wv"]);
    let sensor = floats(&report["sensor_wv"][0]["wv"]);
    assert_eq!(fused, sensor);
}

#[test]
fn ci_half_width_formula_and_determinism() {
    let dir = TempDir::new().unwrap();
    run_ok(&["simulate", "--preset", "case1", "--T", "2048", "--seed", "2", "--out-dir", path(dir.path())]);
    let input = dir.path().join("signals.csv");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        run_ok(&[
            "ci", "--input", path(&input), "--J", "6", "--replicates", "80", "--seed", "4", "--alpha", "0.05",
            "--diagnostics", "--out-dir", path(d),
        ]);
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("intervals.csv")).unwrap(), fs::read(b.join("intervals.csv")).unwrap());
    assert!(a.join("timings.json").exists() && a.join("diagnostics.json").exists());

    let report = read_json(&a.join("report.json"));
    let n = report["data"]["n_samples"].as_f64().unwrap();
    assert_eq!(report["config"]["block_size"], 13);
    let mut sum = 0.0;
    for row in report["intervals"].as_array().unwrap() {
        let sigma = row["sigma_ii"].as_f64().unwrap();
        let half = row["half_width"].as_f64().unwrap();
        let expected = 1.959964 * (sigma / n).sqrt();
        assert!((half - expected).abs() <= 1e-6 * expected, "{half} vs {expected}");
        sum += row["estimate"].as_f64().unwrap();
    }
    assert!((sum - 1.0).abs() < 1e-10);
}

#[test]
fn compare_bookkeeping() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "compare", "--preset", "case1", "--T", "1024", "--n-fit", "5", "--n-eval", "2", "--seed", "1", "--out-dir",
        path(dir.path()),
    ]);
    let report = read_json(&dir.path().join("report.json"));
    let methods = report["methods"].as_array().unwrap();
    let names: Vec<&str> = methods.iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["svo-long", "svo-short", "equal", "rdvg-oracle", "rdvg-estimated"]);
    for m in methods {
        assert_eq!(m["coefficients"].as_array().unwrap().len(), 5);
        assert_eq!(m["wv_curves"].as_array().unwrap().len(), 10);
        assert_eq!(m["fits"].as_array().unwrap().len(), 10);
        for c in m["coefficients"].as_array().unwrap() {
            assert!((floats(c).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(m["wv_curves"].as_array().unwrap().iter().all(|c| floats(c).iter().all(|v| *v >= 0.0)));
    }
    assert_eq!(report["config"]["levels"], 10);
    let fits = fs::read_to_string(dir.path().join("compare_fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 5 * 10);
}

#[test]
fn compare_case2_omits_oracle() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "compare", "--preset", "case2", "--T", "512", "--n-fit", "2", "--n-eval", "1", "--out-dir", path(dir.path()),
    ]);
    let report = read_json(&dir.path().join("report.json"));
    let names: Vec<&str> = report["methods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["method"].as_str().unwrap())
        .collect();
    assert!(!names.contains(&"rdvg-oracle"));
}

#[test]
fn coverage_runs_small() {
    let dir = TempDir::new().unwrap();
    run_ok(&[
        "coverage", "--preset", "case1", "--T", "1024", "--J", "6", "--replicates", "40", "--mc-reps", "4",
        "--out-dir", path(dir.path()),
    ]);
    let report = read_json(&dir.path().join("report.json"));
    let rows = report["coefficients"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r["coverage"].as_f64().unwrap())));
}

#[test]
fn exit_codes_separate_input_and_numeric_errors() {
    let dir = TempDir::new().unwrap();
    let missing = svofuse(&["fit", "--input", path(&dir.path().join("missing.csv"))]);
    assert_eq!(missing.status.code(), Some(2));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "a,b\n1,2\n3\n").unwrap();
    let out = svofuse(&["fit", "--input", path(&ragged), "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n3,x\n").unwrap();
    let out = svofuse(&["fit", "--input", path(&bad), "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("column 2"));

    let short = dir.path().join("short.csv");
    write_csv(&short, "a,b", &(0..16).map(|t| vec![t as f64, -(t as f64)]).collect::<Vec<_>>());
    let out = svofuse(&["fit", "--input", path(&short), "--J", "5", "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    // identical columns: fit falls back, interval inference cannot
    let x = noise(256, 1);
    let twin = dir.path().join("twin.csv");
    write_csv(&twin, "a,b", &x.iter().map(|v| vec![*v, *v]).collect::<Vec<_>>());
    let out = svofuse(&["ci", "--input", path(&twin), "--replicates", "20", "--out-dir", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn split_halves_doubles_sensors() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<Vec<f64>> = noise(1001, 3).into_iter().zip(noise(1001, 4)).map(|(a, b)| vec![a, b]).collect();
    let input = dir.path().join("rec.csv");
    write_csv(&input, "x,y", &rows);
    run_ok(&[
        "fit", "--input", path(&input), "--split-halves", "--demean", "--sample-rate", "200", "--out-dir",
        path(dir.path()),
    ]);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["data"]["n_sensors"], 4);
    assert_eq!(report["data"]["n_samples"], 500);
    assert_eq!(report["data"]["labels"][2], "x_b");
    assert_eq!(report["scales"][0]["tau_seconds"], 0.01);
}
