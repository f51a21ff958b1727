use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spikegraph::ingest::{load_features, load_labels, load_metric, PlantedTruth};
use spikegraph::interpret::load_report;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spikegraph"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spikegraph")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, k: usize, points: usize, seed: u64) {
    let out = run(&[
        "synth",
        "--k",
        &k.to_string(),
        "--points",
        &points.to_string(),
        "--informative",
        "2",
        "--seed",
        &seed.to_string(),
        "--out",
        p(dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn synth_round_trips_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 6, 120, 9);
    synth(&b, 6, 120, 9);
    for f in ["features.csv", "labels.csv", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let features = load_features::<f64>(a.join("features.csv")).unwrap();
    let labels = load_labels(a.join("labels.csv")).unwrap();
    let truth: PlantedTruth = serde_json::from_slice(&fs::read(a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(features.feature_dim(), 6);
    assert_eq!(features.n_rows(), 120);
    assert_eq!(labels.len(), 120);
    // noise-free labels follow the planted rule
    for (r, &(bin, label)) in labels.iter().enumerate() {
        assert_eq!(features.bins[r], bin);
        assert_eq!(truth.label_of(features.row(r)), label);
    }
}

#[test]
fn train_is_deterministic_and_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 5, 200, 4);
    let (f, l) = (data.join("features.csv"), data.join("labels.csv"));
    let mut bytes = Vec::new();
    for name in ["r1", "r2"] {
        let out_dir = tmp.path().join(name);
        let out = run(&[
            "train", "--features", p(&f), "--labels", p(&l), "--n-train", "24", "--seed", "7", "--out", p(&out_dir),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        bytes.push(fs::read(out_dir.join("M.csv")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);

    let diag: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("r1/diagnostics.json")).unwrap()).unwrap();
    let obj: Vec<f64> = diag["objective"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(obj.len() >= 2);
    assert!(obj.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    load_metric::<f64>(tmp.path().join("r1/M.csv")).unwrap();
}

#[test]
fn oracle_rejects_large_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 30, 80, 1);
    let out = run(&[
        "train",
        "--features",
        p(&data.join("features.csv")),
        "--labels",
        p(&data.join("labels.csv")),
        "--objective",
        "glmnn-oracle",
        "--n-train",
        "10",
        "--out",
        p(&tmp.path().join("run")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds"));
}

#[test]
fn predict_with_and_without_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 4, 150, 2);
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        "--features",
        p(&data.join("features.csv")),
        "--labels",
        p(&data.join("labels.csv")),
        "--n-train",
        "20",
        "--n-val",
        "30",
        "--out",
        p(&run_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let pred = tmp.path().join("pred");
    let (m, f, l, truth) = (
        run_dir.join("M.csv"),
        data.join("features.csv"),
        run_dir.join("train_labels.csv"),
        run_dir.join("val_labels.csv"),
    );
    let base = ["predict", "--metric", p(&m), "--features", p(&f), "--labels", p(&l), "--out", p(&pred)];
    let with_truth = [&base[..], &["--truth", p(&truth)]].concat();
    let out = run(&with_truth);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    assert_eq!(load_labels(pred.join("predictions.csv")).unwrap().len(), 30);

    let out = run(&base);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    assert_eq!(load_labels(pred.join("predictions.csv")).unwrap().len(), 150 - 20);
}

#[test]
fn predict_dimension_mismatch_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, 4, 100, 2);
    synth(&b, 3, 100, 2);
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        "--features",
        p(&a.join("features.csv")),
        "--labels",
        p(&a.join("labels.csv")),
        "--n-train",
        "12",
        "--out",
        p(&run_dir),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&[
        "predict",
        "--metric",
        p(&run_dir.join("M.csv")),
        "--features",
        p(&b.join("features.csv")),
        "--labels",
        p(&run_dir.join("train_labels.csv")),
        "--out",
        p(&tmp.path().join("pred")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn report_thresholds_and_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let m = tmp.path().join("M.csv");
    fs::write(&m, "1,0.2,0\n0.2,0.4,-0.1\n0,-0.1,0.2\n").unwrap();
    let r = tmp.path().join("report.json");
    let out = run(&["report", "--metric", p(&m), "--threshold", "0.3", "--top-pairs", "2", "--out", p(&r)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = load_report(&r).unwrap().to_report();
    assert_eq!(doc.dominant, vec![0, 1]);
    assert_eq!(doc.top_pairs.len(), 2);
    assert_eq!((doc.top_pairs[0].0, doc.top_pairs[0].1), (0, 1));

    let out = run(&["report", "--metric", p(&m), "--threshold", "0.5", "--out", p(&r)]);
    assert_eq!(code(&out), 0);
    assert_eq!(load_report(&r).unwrap().to_report().dominant, vec![0]);
}

#[test]
fn bench_row_count_matches_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bench.cfg");
    fs::write(
        &cfg,
        "p_t = 2\np_v = 3\nn_val = 10\nsweep_n_train = 8, 12\nsweep_objective = glr, glmnn-gdpa\n\
         synth_k = 4\nsynth_points = 120\nsynth_informative = 2\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("bench");
    let out = run(&["bench", "--config", p(&cfg), "--baseline", "knn", "--k", "3", "--out", p(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("bench.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "setting,trial_t,trial_v,objective,n_train,accuracy,wall_ms,lp_count");
    // 2 objectives x 2 sizes + one kNN setting per size
    let settings = 6;
    assert_eq!(lines.count(), settings * 2 * 3 + settings);
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out_dir.join("bench_summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), settings);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["train"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    synth(&data, 3, 40, 0);
    let out = run(&[
        "train",
        "--features",
        p(&data.join("features.csv")),
        "--labels",
        p(&data.join("labels.csv")),
        "--dvt",
        "1",
    ]);
    assert_eq!(code(&out), 2);
}
