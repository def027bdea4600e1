use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn hotspot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotspot"))
        .args(args)
        .output()
        .expect("spawn hotspot")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn generated(dir: &TempDir, n: usize) -> PathBuf {
    let path = dir.path().join("points.csv");
    let n = n.to_string();
    stdout(&hotspot(&[
        "gen",
        "--n",
        &n,
        "--hotspots",
        "4",
        "--seed",
        "3",
        "--output",
        path.to_str().unwrap(),
    ]));
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_csv_and_truth() {
    let dir = TempDir::new().unwrap();
    let truth = dir.path().join("truth.json");
    let csv = stdout(&hotspot(&[
        "gen",
        "--n",
        "50",
        "--hotspots",
        "2",
        "--truth",
        s(&truth),
    ]));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "id,lat,lon,f2");
    assert_eq!(lines.count(), 50);
    let doc: Value = serde_json::from_str(&fs::read_to_string(truth).unwrap()).unwrap();
    assert_eq!(doc["centers"].as_array().unwrap().len(), 2);
}

#[test]
fn predict_json_echoes_config() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 800);
    let out = stdout(&hotspot(&[
        "predict",
        "--input",
        s(&input),
        "--features",
        "lat,lon,f2",
        "--k",
        "4",
        "--seed",
        "5",
    ]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["config"]["k_global"], 4);
    assert_eq!(doc["config"]["seed"], 5);
    assert_eq!(doc["config"]["bins"], 16);
    let hotspots = doc["prediction"]["hotspots"].as_array().unwrap();
    assert!(!hotspots.is_empty());
    assert!(hotspots
        .iter()
        .all(|h| h["center_normalized"].as_array().unwrap().len() == 3));
}

#[test]
fn predict_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 500);
    let args = [
        "predict",
        "--input",
        s(&input),
        "--features",
        "lat,lon,f2",
        "--method",
        "kmeans",
        "--k",
        "3",
    ];
    assert_eq!(stdout(&hotspot(&args)), stdout(&hotspot(&args)));
}

#[test]
fn predict_geojson_uses_lon_lat_order() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 500);
    let out = stdout(&hotspot(&[
        "predict",
        "--input",
        s(&input),
        "--features",
        "lat,lon",
        "--format",
        "geojson",
        "--k",
        "2",
    ]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["type"], "FeatureCollection");
    let coords = &doc["features"][0]["geometry"]["coordinates"];
    let (lon, lat) = (coords[0].as_f64().unwrap(), coords[1].as_f64().unwrap());
    assert!((26.0..=45.0).contains(&lon) && (36.0..=42.0).contains(&lat));
}

#[test]
fn eval_prints_three_rows() {
    let out = stdout(&hotspot(&[
        "eval",
        "--n",
        "3000",
        "--hotspots",
        "5",
        "--k",
        "5",
        "--seed",
        "2",
    ]));
    for label in ["OURS", "K-MEANS", "C-MEANS (standard)"] {
        assert!(
            out.lines().any(|l| l.starts_with(label)),
            "missing {label} in\n{out}"
        );
    }
    assert!(out.lines().any(|l| l.starts_with("Method")));
    assert!(out.contains("/66("));
    assert!(out.contains("# config"));
}

#[test]
fn bench_keeps_one_hundred_trials() {
    let out = stdout(&hotspot(&[
        "bench",
        "--n",
        "3000",
        "--hotspots",
        "3",
        "--k",
        "3",
        "--trials",
        "110",
    ]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert!(doc["timing"]["raw_trials"].as_array().unwrap().len() >= 110);
    assert_eq!(doc["timing"]["kept_trials"].as_array().unwrap().len(), 100);
    assert!(doc["timing"]["mean_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn inspect_reports_grid_and_communities() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 400);
    let out = stdout(&hotspot(&[
        "inspect",
        "--input",
        s(&input),
        "--features",
        "lat,lon,f2",
        "--bins",
        "4",
    ]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["points"], 400);
    let counted: u64 = doc["grid"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["count"].as_u64().unwrap())
        .sum();
    assert_eq!(counted, 400);
    assert!(!doc["communities"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_is_applied_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 300);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "bins = 8\nlambda = 0.0\nfeatures = [\"lat\", \"lon\"]\nk = 2\n",
    )
    .unwrap();
    let out = stdout(&hotspot(&[
        "predict",
        "--input",
        s(&input),
        "--config",
        s(&cfg),
        "--k",
        "3",
    ]));
    let doc: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["config"]["bins"], 8);
    assert_eq!(doc["config"]["lambda"], 0.0);
    assert_eq!(doc["config"]["k_global"], 3);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 100);
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "bins = 8\nbinz = 9\n").unwrap();
    let out = hotspot(&[
        "predict",
        "--input",
        s(&input),
        "--features",
        "lat,lon",
        "--config",
        s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("binz"));
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = TempDir::new().unwrap();
    let input = generated(&dir, 100);
    let unknown_flag = hotspot(&["predict", "--bogus"]);
    assert_eq!(unknown_flag.status.code(), Some(1));
    let missing_column = hotspot(&["predict", "--input", s(&input), "--features", "lat,zz"]);
    assert_eq!(missing_column.status.code(), Some(1));
    let bad_lambda = hotspot(&[
        "predict",
        "--input",
        s(&input),
        "--features",
        "lat,lon",
        "--lambda",
        "-1",
    ]);
    assert_eq!(bad_lambda.status.code(), Some(1));

    let broken = dir.path().join("broken.csv");
    fs::write(
        &broken,
        "id,lat,lon\na,37.0,30.0\nb,oops,31.0\nc,38.0,32.0\n",
    )
    .unwrap();
    let out = hotspot(&[
        "predict",
        "--input",
        s(&broken),
        "--features",
        "lat,lon",
        "--k",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
    let lenient = hotspot(&[
        "predict",
        "--input",
        s(&broken),
        "--features",
        "lat,lon",
        "--k",
        "1",
        "--lenient",
    ]);
    assert!(lenient.status.success());
}

#[test]
fn help_lists_defaults() {
    let out = stdout(&hotspot(&["--help"]));
    assert!(out.contains("epsilon=1.5/bins") && out.contains("0.1"));
}
