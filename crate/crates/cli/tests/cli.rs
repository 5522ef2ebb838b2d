use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;
use tempfile::TempDir;

fn buoy(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_buoy"))
        .current_dir(dir)
        .env_remove("BUOY_CONFIG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = buoy(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn failure(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = buoy(dir, args);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    (out.status.code().unwrap(), err)
}

/// Numeric table without its header row.
fn table(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

#[test]
fn field_with_zero_drive_is_zero() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["field", "--drive", "mot=0", "--samples", "11"]);
    let rows = table(&tmp.path().join("field.csv"));
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r[1..].iter().all(|&v| v == 0.0)));
}

#[test]
fn field_line_matches_linear_model_to_microgauss() {
    let tmp = TempDir::new().unwrap();
    for axis in ["x", "z"] {
        let summary = ok(tmp.path(), &["field", "--axis", axis, "--range", "0.05", "--samples", "21"]);
        let rows = table(&tmp.path().join("field.csv"));
        assert!(rows.iter().all(|r| r[7] < 10e-6), "axis {axis}");
        assert!(summary["max_deviation_g"].as_f64().unwrap() < 10e-6);
        // Quadrupole gradient: transverse 2.5 G/mm, axial −5 G/mm.
        let g = &summary["gradient_g_per_mm"];
        assert!((g[0][0].as_f64().unwrap() - 2.5).abs() < 1e-6);
        assert!((g[2][2].as_f64().unwrap() + 5.0).abs() < 1e-6);
    }
}

#[test]
fn field_rejects_unknown_coil() {
    let tmp = TempDir::new().unwrap();
    let (code, err) = failure(tmp.path(), &["field", "--drive", "nonexistent=1"]);
    assert_eq!(code, 1);
    assert_eq!(err["error"], "unknown_coil");
}

#[test]
fn zero_without_stray_is_at_origin() {
    let tmp = TempDir::new().unwrap();
    let v = ok(tmp.path(), &["zero"]);
    for k in 0..3 {
        assert_eq!(v["analytic_r0_mm"][k].as_f64().unwrap(), 0.0);
        assert!(v["numerical_r0_mm"][k].as_f64().unwrap().abs() < 1e-9);
    }
}

#[test]
fn zero_under_y_stray_agrees_with_exact_field() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"stray_field": [0, 0.025, 0]}"#);
    let v = ok(tmp.path(), &["zero", "--config", &cfg]);
    assert!((v["analytic_r0_mm"][1].as_f64().unwrap() + 0.010).abs() < 1e-9);
    assert!(v["disagreement_um"].as_f64().unwrap() < 0.1);
    let file: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("zero.json")).unwrap()).unwrap();
    assert_eq!(file, v);
}

#[test]
fn zero_with_cancelling_gradient_is_a_numerical_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"stray_field": [0, 0.025, 0], "stray_gradient": [[-2.5, 0, 0], [0, -2.5, 0], [0, 0, 5]]}"#,
    );
    let (code, err) = failure(tmp.path(), &["zero", "--config", &cfg]);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "singular_trap");
    assert!(err["message"].as_str().unwrap().contains("condition number"));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"shots_per_condition": 0}"#);
    let (code, err) = failure(tmp.path(), &["shots", "--config", &cfg]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "invalid_config"));
    let (code, err) = failure(tmp.path(), &["zero", "--config", "missing.json"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "io"));
    let (code, err) = failure(tmp.path(), &["zero", "--polarity", "3"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "usage"));
}

#[test]
fn config_falls_back_to_environment() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "env.json", r#"{"stray_field": [0.05, 0, 0]}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_buoy"))
        .current_dir(tmp.path())
        .env("BUOY_CONFIG", "env.json")
        .arg("zero")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["analytic_r0_mm"][0].as_f64().unwrap() + 0.02).abs() < 1e-9);
}

const NOISELESS_TWO_SETTINGS: &str = r#"{
    "stray_field": [0, 0.03, -0.01],
    "shots_per_condition": 10,
    "noise": {"position_rms_um": [0, 0]},
    "bias_grid": {"y": [0, 0.1]}
}"#;

#[test]
fn noiseless_shots_give_identical_midpoints() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", NOISELESS_TWO_SETTINGS);
    let v = ok(tmp.path(), &["shots", "--config", &cfg, "--out", "run"]);
    assert_eq!(v["shots"], 40);
    let csv = fs::read_to_string(tmp.path().join("run/shots.csv")).unwrap();
    assert_eq!(csv.lines().count(), 41);
    let summary: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("run/summary.json")).unwrap()).unwrap();
    let rhombi = summary["rhombi"].as_array().unwrap();
    assert_eq!(rhombi.len(), 2);
    let (m0, m1) = (&rhombi[0]["midpoint"], &rhombi[1]["midpoint"]);
    for k in 0..2 {
        assert!((m0[k].as_f64().unwrap() - m1[k].as_f64().unwrap()).abs() < 1e-9);
    }
    // The y displacement changes with the y bias; the z displacement does not.
    let dy = |i: usize| rhombi[i]["displacement"][0].as_f64().unwrap();
    let dz = |i: usize| rhombi[i]["displacement"][1].as_f64().unwrap();
    assert!((dy(0) - dy(1)).abs() > 1.0);
    assert!((dz(0) - dz(1)).abs() < 1e-9);
}

#[test]
fn shots_are_identical_across_worker_counts_and_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"stray_field": [0, 0.03, -0.01], "shots_per_condition": 15,
            "bias_grid": {"layout": "cross", "y": [-0.1, 0, 0.1], "z": [-0.002, 0.002]}}"#,
    );
    for (dir, workers) in [("a", "1"), ("b", "4"), ("c", "4")] {
        ok(tmp.path(), &["shots", "--config", &cfg, "--out", dir, "--workers", workers]);
    }
    for file in ["shots.csv", "summary.json"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        for dir in ["b", "c"] {
            assert_eq!(a, fs::read(tmp.path().join(dir).join(file)).unwrap(), "{file} in {dir}");
        }
    }
    ok(tmp.path(), &["shots", "--config", &cfg, "--out", "d", "--seed", "7"]);
    assert_ne!(
        fs::read(tmp.path().join("a/shots.csv")).unwrap(),
        fs::read(tmp.path().join("d/shots.csv")).unwrap()
    );
}

/// Shot records whose polarity displacement along `axis` is
/// `slope·(I − crossing)` px, two shots per polarity.
fn linear_fixture(axis: usize, currents: &[f64], crossing: f64, slope: f64) -> String {
    let mut text = String::from("shot_id,Ix,Iy,Iz,polarity,y_px,z_px,qc,seed\n");
    let mut id = 0;
    for &i in currents {
        let d = slope * (i - crossing);
        let mut bias = [0.0; 3];
        bias[axis] = i;
        for rep in 0..2 {
            for pol in [1.0, -1.0] {
                let jitter = if rep == 0 { 0.01 } else { -0.01 };
                let mut c = [100.0, 100.0];
                c[axis - 1] += pol * d / 2.0 + jitter;
                text += &format!(
                    "{id},{},{},{},{},{},{},pass,{id}\n",
                    bias[0], bias[1], bias[2], pol as i8, c[0], c[1]
                );
                id += 1;
            }
        }
    }
    text
}

#[test]
fn compensate_recovers_constructed_crossings() {
    let tmp = TempDir::new().unwrap();
    let y = write(tmp.path(), "y.csv", &linear_fixture(1, &[-0.4, -0.3, -0.2, -0.1], -0.27, -40.0));
    let v = ok(tmp.path(), &["compensate", "--records", &y, "--axis", "y", "--out", "cy"]);
    assert!((v["crossings"]["y"]["current_at_a"].as_f64().unwrap() + 0.27).abs() < 1e-9);
    let rows = table(&tmp.path().join("cy/regression_y.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert!((r[1] - r[3]).abs() < 1e-9);
    }

    let z = write(tmp.path(), "z.csv", &linear_fixture(2, &[0.0, 0.02, 0.04, 0.06], 0.035, 300.0));
    let v = ok(tmp.path(), &["compensate", "--records", &z, "--out", "cz"]);
    assert!((v["crossings"]["z"]["current_at_a"].as_f64().unwrap() - 0.035).abs() < 1e-9);
    assert!(v["crossings"].get("y").is_none());
    // B = −α·I@ with α_z of the MOT+ pair.
    let b = v["crossings"]["z"]["stray_g"].as_f64().unwrap();
    assert!((b / 0.035 + 16.138).abs() < 0.01, "{b}");
}

#[test]
fn compensate_needs_two_currents() {
    let tmp = TempDir::new().unwrap();
    let y = write(tmp.path(), "y.csv", &linear_fixture(1, &[0.1, 0.1], 0.0, 1.0));
    let (code, err) = failure(tmp.path(), &["compensate", "--records", &y, "--axis", "y"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "degenerate_design"));
    let (code, err) = failure(tmp.path(), &["compensate", "--records", &y]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "degenerate_design"));
}

fn series_file(dir: &Path, name: &str, values: &[f64]) -> String {
    let text: String = values.iter().map(|v| format!("{v}\n")).collect();
    write(dir, name, &text)
}

fn slope(rows: &[Vec<f64>], max_n: f64) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r[0] <= max_n).map(|r| (r[0].ln(), r[1].ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>()
}

#[test]
fn allan_of_constant_series_is_zero() {
    let tmp = TempDir::new().unwrap();
    let f = series_file(tmp.path(), "c.csv", &[3.25; 400]);
    ok(tmp.path(), &["allan", "--records", &f, "--coordinate", "y"]);
    let rows = table(&tmp.path().join("allan_y.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[3] == 0.0));
}

#[test]
fn allan_of_white_noise_falls_with_root_n() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let values: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let f = series_file(tmp.path(), "w.csv", &values);
    ok(tmp.path(), &["allan", "--records", &f, "--coordinate", "z", "--sizes", "1,2,4,8,16,32,64,100"]);
    let rows = table(&tmp.path().join("allan_z.csv"));
    let s = slope(&rows, 100.0);
    assert!((s + 0.5).abs() < 0.05, "slope {s}");
    // The reference column is σ(1)/√n.
    for r in &rows {
        assert!((r[3] - rows[0][1] / r[0].sqrt()).abs() < 1e-8);
    }
}

#[test]
fn allan_floor_rises_with_slow_drift() {
    let tmp = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let white: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let drift: Vec<f64> =
        white.iter().enumerate().map(|(i, w)| w + 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 800.0).sin()).collect();
    let a = series_file(tmp.path(), "a.csv", &white);
    let b = series_file(tmp.path(), "b.csv", &drift);
    let floor = |f: &str, out: &str| -> f64 {
        let v = ok(tmp.path(), &["allan", "--records", f, "--coordinate", "y", "--out", out]);
        v["y"]["noise_floor"]["floor_px"].as_f64().unwrap()
    };
    assert!(floor(&b, "b") > 3.0 * floor(&a, "a"));
}

#[test]
fn allan_rejects_sizes_beyond_the_data() {
    let tmp = TempDir::new().unwrap();
    let f = series_file(tmp.path(), "s.csv", &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let (code, err) = failure(tmp.path(), &["allan", "--records", &f, "--sizes", "1,3"]);
    assert_eq!((code, err["error"].as_str().unwrap()), (1, "too_few_groups"));
}

#[test]
fn sensitivity_sweep() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["sensitivity", "--range", "3e-4", "--steps", "5"]);
    let rows = table(&tmp.path().join("sensitivity.csv"));
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[2][0], 0.0);
    assert_eq!(rows[2][1], 0.0);
    for r in [&rows[0], &rows[4]] {
        assert!((0.25..=0.75).contains(&r[1].abs()), "{r:?}");
    }
    assert!(rows[0][1] * rows[4][1] < 0.0);

    ok(tmp.path(), &["sensitivity", "--range", "1e-6", "--steps", "3", "--out", "small"]);
    let rows = table(&tmp.path().join("small/sensitivity.csv"));
    assert!(rows.iter().all(|r| r[2].abs() < 0.01));
}

#[test]
fn tables_use_at_most_nine_significant_digits() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["field", "--axis", "z", "--samples", "7"]);
    let text = fs::read_to_string(tmp.path().join("field.csv")).unwrap();
    for field in text.lines().skip(1).flat_map(|l| l.split(',')) {
        let mantissa = field.split('e').next().unwrap();
        let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).collect::<String>();
        let significant = digits.trim_start_matches('0').trim_end_matches('0');
        assert!(significant.len() <= 9, "{field}");
    }
}
