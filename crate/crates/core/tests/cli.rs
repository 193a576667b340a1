use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mddf::dataset::Dataset;
use mddf::{model_io, Matrix};
use serde_json::Value;

fn mddf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mddf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn two_clusters(m: usize, n: usize) -> Dataset {
    let x = (0..m)
        .flat_map(|i| {
            let base = if i % 2 == 0 { 0.0 } else { 10.0 };
            (0..n).map(move |j| base + ((i * 7 + j * 3) % 5) as f64 * 0.3)
        })
        .collect();
    let y = (0..m).map(|i| i % 2).collect();
    Dataset::new(Matrix::from_vec(m, n, x), y, 2).unwrap()
}

fn write(dir: &Path, name: &str, data: &Dataset) -> String {
    let path = dir.join(name);
    data.write_csv(&path).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &[&str] = &["--trees", "5", "--folds", "3", "--layers", "3"];

fn train(dir: &Path, data: &str, extra: &[&str]) -> (String, String, Output) {
    let model = dir.join("model.mddf").to_str().unwrap().to_string();
    let report = dir.join("report.jsonl").to_str().unwrap().to_string();
    let mut args = vec!["train", "--data", data, "--out-model", &model, "--out-report", &report];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    let out = mddf(&args);
    (model, report, out)
}

fn records(report: &str) -> Vec<Value> {
    fs::read_to_string(report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn train_writes_model_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(30, 3));
    let test = write(dir.path(), "test.csv", &two_clusters(10, 3));
    let (model, report, out) = train(
        dir.path(),
        &data,
        &["--test-data", &test, "--gamma", "0.8", "--mu", "0.1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(Path::new(&model).exists());

    let recs = records(&report);
    let summary = recs.last().unwrap();
    assert_eq!(summary["record"], "summary");
    let layers = &recs[..recs.len() - 1];
    assert_eq!(layers.len() as u64, summary["n_layers"].as_u64().unwrap());
    for l in layers {
        assert_eq!(l["record"], "layer");
        for key in ["train_accuracy", "test_accuracy"] {
            let a = l[key].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&a));
        }
        assert!(l["train_margin"]["mean"].is_number());
        assert!(l["alpha"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["train_data"]["m"], 30);
    assert_eq!(summary["train_data"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(
        layers.last().unwrap()["test_accuracy"],
        summary["final_accuracy"],
        "last layer's test accuracy is the final accuracy"
    );
}

#[test]
fn invalid_gamma_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(12, 2));
    let (_, _, out) = train(dir.path(), &data, &["--gamma", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
}

#[test]
fn missing_data_file_exits_with_data_code() {
    let out = mddf(&["train", "--data", "/nonexistent/file.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mode_is_echoed_in_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(18, 2));
    let (_, report, out) = train(dir.path(), &data, &["--mode", "stacking_only"]);
    assert!(out.status.success());
    let recs = records(&report);
    assert_eq!(recs.last().unwrap()["config"]["mode"], "stacking_only");
}

#[test]
fn reports_are_reproducible_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(24, 3));
    let strip = |report: &str| -> Vec<Value> {
        records(report)
            .into_iter()
            .map(|mut v| {
                v.as_object_mut().unwrap().remove("wall_time_ms");
                v
            })
            .collect()
    };
    let (model_a, report_a, _) = train(dir.path(), &data, &["--holdout", "0.25"]);
    let first = strip(&report_a);
    let bytes_a = fs::read(&model_a).unwrap();
    let (model_b, report_b, _) = train(dir.path(), &data, &["--holdout", "0.25"]);
    assert_eq!(first, strip(&report_b));
    assert_eq!(bytes_a, fs::read(model_b).unwrap());
}

#[test]
fn evaluate_on_training_data_of_separable_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(30, 2));
    let (model, _, out) = train(dir.path(), &data, &[]);
    assert!(out.status.success());
    let metrics = dir.path().join("metrics.json");
    let out = mddf(&[
        "evaluate",
        "--model",
        &model,
        "--data",
        &data,
        "--out",
        metrics.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(metrics).unwrap()).unwrap();
    assert_eq!(v["accuracy"], 1.0);
    assert_eq!(v["confusion"], serde_json::json!([[15, 0], [0, 15]]));
    let prefixes = v["prefixes"].as_array().unwrap();
    assert_eq!(prefixes.last().unwrap()["accuracy"], 1.0);
}

#[test]
fn evaluate_rejects_wrong_feature_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(18, 2));
    let wider = write(dir.path(), "wide.csv", &two_clusters(18, 3));
    let (model, _, _) = train(dir.path(), &data, &[]);
    let out = mddf(&["evaluate", "--model", &model, "--data", &wider]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(18, 2));
    let (model, _, _) = train(dir.path(), &data, &[]);
    let mut bytes = fs::read(&model).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&model, bytes).unwrap();
    let out = mddf(&["evaluate", "--model", &model, "--data", &data]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checksum"));
}

#[test]
fn predict_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(18, 2));
    let (model, _, _) = train(dir.path(), &data, &[]);
    let out = mddf(&["predict", "--model", &model, "--data", &data]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "prediction,score_0,score_1");
    assert_eq!(lines.len(), 19);
}

#[test]
fn export_features_matches_prefix_scores() {
    let dir = tempfile::tempdir().unwrap();
    let ds = two_clusters(21, 3);
    let data = write(dir.path(), "train.csv", &ds);
    let (model_path, _, _) = train(dir.path(), &data, &["--patience", "0"]);
    let out_dir = dir.path().join("features");
    let out = mddf(&[
        "export-features",
        "--model",
        &model_path,
        "--data",
        &data,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let model = model_io::load(&model_path).unwrap();
    for t in 1..=model.n_layers() {
        let mut reader = csv::Reader::from_path(out_dir.join(format!("layer_{t}.csv"))).unwrap();
        assert_eq!(reader.headers().unwrap().len(), 3 + 2 + 1);
        let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), 21);
        for (r, rec) in rows.iter().enumerate() {
            let x = ds.features().row(r);
            let expected = &model.prefix_scores(x).unwrap()[t - 1];
            for j in 0..3 {
                assert_eq!(rec[j].parse::<f64>().unwrap(), x[j]);
            }
            for c in 0..2 {
                assert_eq!(rec[3 + c].parse::<f64>().unwrap(), expected[c]);
            }
        }
    }
}

#[test]
fn grid_search_single_point_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let data = write(dir.path(), "train.csv", &two_clusters(30, 2));
    let test = write(dir.path(), "test.csv", &two_clusters(12, 2));
    let grid_report = dir.path().join("grid.json");
    let mut args = vec![
        "grid-search",
        "--data",
        &data,
        "--test-data",
        &test,
        "--gammas",
        "0.85",
        "--mus",
        "0.05",
        "--schedules",
        "2t+2",
        "--out-report",
        grid_report.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let out = mddf(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&grid_report).unwrap()).unwrap();
    assert_eq!(v["candidates"].as_array().unwrap().len(), 1);
    assert_eq!(v["best"]["gamma"], 0.85);
    assert_eq!(v["best"]["depth_schedule"], "2t+2");

    let (_, report, _) = train(
        dir.path(),
        &data,
        &[
            "--test-data",
            &test,
            "--gamma",
            "0.85",
            "--mu",
            "0.05",
            "--depth-schedule",
            "2t+2",
        ],
    );
    let recs = records(&report);
    assert_eq!(recs.last().unwrap()["final_accuracy"], v["best"]["accuracy"]);
}

#[test]
fn self_check_passes() {
    let out = mddf(&["self-check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = mddf(&["--self-check"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout)
        .lines()
        .all(|l| l.starts_with("PASS")));
}

#[test]
fn libsvm_input_trains() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.libsvm");
    let text: String = (0..20)
        .map(|i| {
            let y = if i % 2 == 0 { -1 } else { 1 };
            format!("{y} 1:{} 3:{}\n", i % 2 * 5 + i % 3, i % 4)
        })
        .collect();
    fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap();
    let (model, _, out) = train(dir.path(), p, &["--format", "libsvm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = mddf(&["evaluate", "--model", &model, "--data", p, "--format", "libsvm"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
