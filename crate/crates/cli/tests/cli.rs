use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cplda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cplda"))
        .args(args)
        .env("CPLDA_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, n: usize, rank: usize, w: f64) -> String {
    let cfg = format!(
        r#"{{"scenario": {{"id": "small", "dims": [4, 4, 4], "rank": {rank}, "n1": {n}, "n2": {n},
           "n_test": 50, "weights": {{"kind": "equal", "w": {w}}}, "basis": {{"kind": "orthogonal"}},
           "cov": "identity", "replications": 2, "seed": 1}}}}"#
    );
    let path = dir.join("config.json");
    fs::write(&path, cfg).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_writes_dataset_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 20, 2, 3.0);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = cplda(&["simulate", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let labels = fs::read_to_string(a.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().next(), Some("index,file,label"));
    assert_eq!(labels.lines().count(), 41);
    let tensors: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "dten"))
        .collect();
    assert_eq!(tensors.len(), 40);
    for name in ["labels.csv", "truth.json", "x_0000.dten", "x_0039.dten"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let truth = cplda::CpModel::read_json(a.join("truth.json")).unwrap();
    assert_eq!(truth.rank(), 2);
}

#[test]
fn fit_then_classify_separates_training_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 60, 2, 4.0);
    let data = tmp.path().join("data");
    let model = tmp.path().join("model");
    let pred = tmp.path().join("pred");
    let d = data.to_str().unwrap();
    let m = model.to_str().unwrap();
    assert!(cplda(&["simulate", "--config", &cfg, "--out", d]).status.success());

    let o = cplda(&["fit", "--data", d, "--rank", "2", "--out", m]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "rank 2");
    for f in ["cp_model.json", "fit_report.csv", "fit.json", "discriminant/b_hat.dten"] {
        assert!(model.join(f).exists(), "{f}");
    }
    assert_eq!(cplda::CpModel::read_json(model.join("cp_model.json")).unwrap().rank(), 2);

    let o = cplda(&["classify", "--model", m, "--data", d, "--out", pred.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rate: f64 = stdout(&o).trim().strip_prefix("misclassification ").unwrap().parse().unwrap();
    assert!(rate < 0.05, "training error {rate}");
    let preds = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(preds.lines().next(), Some("index,statistic,label"));
    assert_eq!(preds.lines().count(), 121);
}

#[test]
fn single_candidate_rank_is_taken() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 20, 1, 4.0);
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    assert!(cplda(&["simulate", "--config", &cfg, "--out", d]).status.success());
    let out = tmp.path().join("model");
    let o = cplda(&["fit", "--data", d, "--cv-ranks", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "rank 1");
}

#[test]
fn bench_writes_one_row_per_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 20, 2, 3.0);
    let out = tmp.path().join("bench");
    let o = cplda(&["bench", "--config", &cfg, "--reps", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("small.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + cplda::bench::METRIC_NAMES.len());
    assert_eq!(csv.lines().next().unwrap(), cplda::bench::CSV_HEADER.join(","));
}

#[test]
fn preset_name_is_accepted() {
    let o = cplda(&["bench", "--preset", "t1-orth-id-w9", "--reps", "1"]);
    // Parses the preset, then fails on the missing output directory.
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--out"));
}

#[test]
fn usage_and_io_errors_exit_2() {
    let o = cplda(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 20, 2, 3.0);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let bad = blocker.join("sub");
    let o = cplda(&["simulate", "--config", &cfg, "--out", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());

    let o = cplda(&["fit", "--data", tmp.path().join("missing").to_str().unwrap(), "--rank", "1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn undersized_classes_are_a_compute_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), 20, 2, 3.0);
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    assert!(cplda(&["simulate", "--config", &cfg, "--out", d]).status.success());
    let out = tmp.path().join("model");
    let o = cplda(&["fit", "--data", d, "--cv-ranks", "1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}
