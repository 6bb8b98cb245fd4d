use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ecg_cvae::io;
use ecg_cvae::pipeline::{Layout, PrepSummary, SplitFile};
use ecg_cvae_core::evaluation::{evaluate, EvaluationReport};
use ecg_cvae_core::preprocess::{ClassWeights, NormStats};
use ecg_cvae_core::training::TrainSummary;
use ecg_cvae_core::{DiagClass, LabelMatrix, LabelSet, NUM_CLASSES};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecg-cvae"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).arg("--quiet").env_remove("ECG_CVAE_DATA_DIR").output().unwrap()
}

fn ok(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Exit code and the JSON error object from stderr.
fn failure(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), err)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_toml(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn prepare_writes_parseable_artifacts_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let v = ok(&["prepare", "--synthetic", "--samples", "500", "--out", s(out)]);
        assert_eq!(v["command"], "prepare");
    }
    let layout = Layout::new(&a);
    let splits: SplitFile = io::read_json(&layout.splits()).unwrap();
    let stats: NormStats = io::read_json(&layout.norm_stats()).unwrap();
    let weights: ClassWeights = io::read_json(&layout.class_weights()).unwrap();
    let summary: PrepSummary = io::read_json(&layout.prep_summary()).unwrap();

    assert_eq!(splits.record_count, 500);
    assert_eq!(stats.leads(), 12);
    assert!(stats.sigma.iter().all(|&s| s > 0.0));
    assert_eq!(weights.adjusted[DiagClass::Hyp.index()], 1.5 * weights.base[DiagClass::Hyp.index()]);
    assert_eq!(splits.train.len() + splits.validation.len(), splits.balanced.len());
    assert_eq!(splits.validation.len(), splits.balanced.len() / 5);
    assert_eq!(summary.test_size, splits.test.len());
    assert_eq!(summary.test_size, 50);

    let other = Layout::new(&b);
    for (x, y) in [
        (layout.splits(), other.splits()),
        (layout.norm_stats(), other.norm_stats()),
        (layout.class_weights(), other.class_weights()),
    ] {
        assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{}", x.display());
    }
}

#[test]
fn forced_plateau_lowers_learning_rate_monotonically() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let config = write_toml(
        tmp.path(),
        "[data]\nmode = \"synthetic\"\n[synthetic]\nsamples = 300\n\
         [train]\nlearning_rate = 0.3\nbatch_size = 32\nmax_epochs = 6\nplateau_patience = 1\nearly_stop_patience = 6\n\
         [model]\nfilters = [4, 6, 8]\nlatent_dim = 4\ndense_units = [8, 6]\n",
    );
    let v = ok(&["run-all", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(v["command"], "run-all");

    let layout = Layout::new(&out);
    let history = io::read_history(&layout.history()).unwrap();
    assert!(!history.is_empty());
    assert!(history.windows(2).all(|w| w[1].lr <= w[0].lr));
    let summary: TrainSummary = io::read_json(&layout.train_summary()).unwrap();
    assert!(!summary.lr_reductions.is_empty(), "{summary:?}");
    assert_eq!(summary.epochs_completed, history.len());
    for r in &summary.lr_reductions {
        assert!(r.epoch <= history.len());
    }

    let report: EvaluationReport = io::read_json(&layout.report()).unwrap();
    assert_eq!(report.classes.len(), NUM_CLASSES);
    let csv = fs::read_to_string(layout.confusion_csv()).unwrap();
    assert_eq!(csv.lines().count(), 1 + NUM_CLASSES);
    for class in DiagClass::ALL {
        assert!(layout.confusion_svg(class).exists());
    }
    assert!(layout.training_curves().exists());

    let wider = tmp.path().join("wider.toml");
    let text = fs::read_to_string(&config).unwrap().replace("filters = [4, 6, 8]", "filters = [4, 6, 10]");
    fs::write(&wider, text).unwrap();
    let (code, err) = failure(&["evaluate", "--config", s(&wider), "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str()), (7, Some("CheckpointMismatch")));

    let mut stats: NormStats = io::read_json(&layout.norm_stats()).unwrap();
    stats.mu.pop();
    stats.sigma.pop();
    io::write_json(&layout.norm_stats(), &stats).unwrap();
    let (code, err) = failure(&["evaluate", "--config", s(&config), "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str()), (7, Some("CheckpointMismatch")));
}

fn metadata_with_one_signal(dir: &Path, header: &str, row: &str, floats: usize) -> std::path::PathBuf {
    let signal: Vec<f32> = (0..floats).map(|i| (i % 7) as f32 * 0.1).collect();
    io::write_signal_file(&dir.join("r1.bin"), &signal).unwrap();
    let metadata = dir.join("metadata.csv");
    fs::write(&metadata, format!("{header}\n{row}\n")).unwrap();
    metadata
}

const HEADER: &str = "record_id,strat_fold,CD,HYP,MI,NORM,STTC,signal_file";

#[test]
fn short_signal_is_a_shape_error() {
    let tmp = tempfile::tempdir().unwrap();
    let metadata = metadata_with_one_signal(tmp.path(), HEADER, "r1,3,0,0,0,1,0,r1.bin", 999 * 12);
    let out = tmp.path().join("out");
    let (code, err) = failure(&["prepare", "--metadata", s(&metadata), "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str()), (6, Some("BadSignalShape")));
    assert_eq!(err["record_id"], "r1");
}

#[test]
fn missing_and_malformed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let absent = tmp.path().join("nope.csv");
    let (code, err) = failure(&["prepare", "--metadata", s(&absent), "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str()), (4, Some("MissingFile")));

    let bad_label = metadata_with_one_signal(tmp.path(), HEADER, "r1,3,0,2,0,1,0,r1.bin", 1000 * 12);
    let (code, err) = failure(&["prepare", "--metadata", s(&bad_label), "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str(), err["column"].as_str()), (5, Some("SchemaMismatch"), Some("HYP")));

    let bad_header = metadata_with_one_signal(
        tmp.path(),
        "record_id,fold,CD,HYP,MI,NORM,STTC,signal_file",
        "r1,3,0,0,0,1,0,r1.bin",
        1000 * 12,
    );
    let (code, err) = failure(&["prepare", "--metadata", s(&bad_header), "--out", s(&out)]);
    assert_eq!((code, err["column"].as_str()), (5, Some("strat_fold")));

    let (code, err) = failure(&["prepare", "--synthetic", "--threshold", "1.5", "--out", s(&out)]);
    assert_eq!((code, err["error"].as_str()), (3, Some("InvalidConfig")));

    let (code, err) = failure(&["plot", "--out", s(&tmp.path().join("empty"))]);
    assert_eq!((code, err["error"].as_str()), (4, Some("MissingFile")));
}

/// Probabilities that reproduce a fixed confusion pattern for each class.
fn replay(counts: [(u64, u64, u64, u64); NUM_CLASSES]) -> (Vec<f64>, LabelMatrix) {
    let n = counts[0].0 + counts[0].1 + counts[0].2 + counts[0].3;
    let mut probs = vec![0.0; n as usize * NUM_CLASSES];
    let mut rows = vec![LabelSet::EMPTY; n as usize];
    for (j, &(tn, fp, fn_, tp)) in counts.iter().enumerate() {
        assert_eq!(tn + fp + fn_ + tp, n);
        for i in 0..n {
            let (truth, pred) = if i < tn {
                (false, false)
            } else if i < tn + fp {
                (false, true)
            } else if i < tn + fp + fn_ {
                (true, false)
            } else {
                (true, true)
            };
            probs[i as usize * NUM_CLASSES + j] = if pred { 0.8 } else { 0.2 };
            if truth {
                rows[i as usize].insert(DiagClass::ALL[j]);
            }
        }
    }
    (probs, LabelMatrix::new(rows))
}

#[test]
fn replayed_confusion_pattern_reports_and_plots() {
    let counts = [
        (1575, 130, 150, 348),
        (1843, 97, 131, 132),
        (1511, 139, 178, 375),
        (1014, 225, 87, 877),
        (1501, 179, 115, 408),
    ];
    let (probs, truth) = replay(counts);
    let report = evaluate(&probs, &truth, 0.5, None).unwrap();
    let norm = &report.classes[DiagClass::Norm.index()];
    assert_eq!((norm.tn, norm.fp, norm.fn_, norm.tp), (1014, 225, 87, 877));
    assert!((report.micro_precision - 0.7354).abs() < 5e-4);
    assert!((report.binary_accuracy - 0.8701).abs() < 5e-4);

    let tmp = tempfile::tempdir().unwrap();
    let layout = Layout::new(tmp.path());
    io::write_json(&layout.report(), &report).unwrap();
    let back: EvaluationReport = io::read_json(&layout.report()).unwrap();
    assert_eq!(back.confusion(), report.confusion());
    let per_class = io::per_class_csv(&report);
    assert!(per_class.starts_with("class,precision,recall,f1,support,auc\n"));
    assert!(per_class.contains("\nNORM,"));

    let v = ok(&["plot", "--out", s(tmp.path()), "--report", s(&layout.report())]);
    assert_eq!(v["written"].as_array().unwrap().len(), NUM_CLASSES + 1);
    let svg = fs::read_to_string(layout.confusion_svg(DiagClass::Norm)).unwrap();
    for label in ["1014", "225", "87", "877"] {
        assert!(svg.contains(&format!(">{label}</text>")), "{label}");
    }
    assert!(!layout.training_curves().exists());
}
