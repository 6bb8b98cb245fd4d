//! The five commands: prepare, train, evaluate, plot and run-all.

use std::path::{Path, PathBuf};

use ecg_cvae_core::dataset::{generate_synthetic, NUM_LEADS};
use ecg_cvae_core::evaluation::{self, ClassConfusion, EvaluationReport};
use ecg_cvae_core::nn::Model;
use ecg_cvae_core::preprocess::{
    balance, compute_class_weights, sample_weights, stratified_split, validation_split, BalanceSpec, ClassWeights,
    LeadMoments, NormStats,
};
use ecg_cvae_core::training::{
    predict_rows, train_with_observer, weighted_bce, NormalizedCorpus, TrainSummary, TrainingData,
};
use ecg_cvae_core::{Corpus, DiagClass, NUM_CLASSES};
use serde::{Deserialize, Serialize};

use crate::config::{DataMode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::{io, plot};

/// Training-fold size of the full PTB-XL release; synthetic targets scale by `n_train / PTBXL_TRAIN_RECORDS`.
pub const PTBXL_TRAIN_RECORDS: usize = 19_631;
pub const DEFAULT_BALANCE_TARGET: usize = 4_000;

/// Every artifact location under the output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }
    pub fn splits(&self) -> PathBuf {
        self.out.join("splits.json")
    }
    pub fn norm_stats(&self) -> PathBuf {
        self.out.join("norm_stats.json")
    }
    pub fn class_weights(&self) -> PathBuf {
        self.out.join("class_weights.json")
    }
    pub fn prep_summary(&self) -> PathBuf {
        self.out.join("prep_summary.json")
    }
    pub fn best_checkpoint(&self) -> PathBuf {
        self.out.join("model_best.ckpt")
    }
    pub fn last_checkpoint(&self) -> PathBuf {
        self.out.join("model_last.ckpt")
    }
    pub fn history(&self) -> PathBuf {
        self.out.join("history.csv")
    }
    pub fn train_summary(&self) -> PathBuf {
        self.out.join("train_summary.json")
    }
    pub fn report(&self) -> PathBuf {
        self.out.join("report.json")
    }
    pub fn confusion_csv(&self) -> PathBuf {
        self.out.join("confusion.csv")
    }
    pub fn per_class_csv(&self) -> PathBuf {
        self.out.join("per_class.csv")
    }
    pub fn training_curves(&self) -> PathBuf {
        self.out.join("training_curves.svg")
    }
    pub fn confusion_svg(&self, class: DiagClass) -> PathBuf {
        self.out.join(format!("confusion_{}.svg", class.name()))
    }
    pub fn confusion_overall_svg(&self) -> PathBuf {
        self.out.join("confusion_overall.svg")
    }
}

/// Row lists into the corpus, in metadata order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub record_count: usize,
    /// Concatenated per-class lists, before the validation split.
    pub balanced: Vec<usize>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub class: DiagClass,
    /// Positive rows among the training folds.
    pub before: usize,
    /// Size of the class's list in the balanced set.
    pub after: usize,
    pub target: Option<usize>,
    pub change_percent: f64,
    /// Positive labels in the balanced set, counting co-occurring labels.
    pub balanced_label_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepSummary {
    pub records: usize,
    pub train_fold_records: usize,
    pub test_records: usize,
    pub classes: Vec<ClassBalance>,
    pub balanced_total: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub balance_seed: u64,
    pub split_seed: u64,
}

fn log(cfg: &RunConfig, msg: impl AsRef<str>) {
    if !cfg.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// The corpus this configuration points at. Synthetic corpora are read back
/// from the copy `prepare` wrote.
pub fn load_inputs(cfg: &RunConfig) -> CliResult<Corpus> {
    match &cfg.mode {
        DataMode::Real { metadata, signal_dir } => io::load_corpus(metadata, signal_dir),
        DataMode::Synthetic { .. } => {
            let dir = Layout::new(&cfg.out).data_dir();
            io::load_corpus(&dir.join(io::METADATA_FILE), &dir)
        }
    }
}

/// Default targets: 4000 each for HYP and NORM, scaled to the number of
/// training-fold records for synthetic corpora.
pub fn resolve_balance(cfg: &RunConfig, train_fold_records: usize) -> CliResult<BalanceSpec> {
    let targets = match &cfg.balance_targets {
        Some(t) => t.clone(),
        None => {
            let target = if cfg.is_synthetic() {
                let scaled = DEFAULT_BALANCE_TARGET as f64 * train_fold_records as f64 / PTBXL_TRAIN_RECORDS as f64;
                (scaled.round() as usize).max(1)
            } else {
                DEFAULT_BALANCE_TARGET
            };
            vec![(DiagClass::Hyp, target), (DiagClass::Norm, target)]
        }
    };
    Ok(BalanceSpec::new(&targets, cfg.balance_seed)?)
}

pub fn prepare(cfg: &RunConfig) -> CliResult<PrepSummary> {
    let layout = Layout::new(&cfg.out);
    io::ensure_dir(&layout.out)?;
    let corpus = match &cfg.mode {
        DataMode::Synthetic { samples, seed, class_mix } => {
            let corpus = generate_synthetic(*samples, *seed, *class_mix)?;
            io::write_corpus(&corpus, &layout.data_dir())?;
            log(cfg, format!("wrote {} synthetic records to {}", corpus.len(), layout.data_dir().display()));
            corpus
        }
        DataMode::Real { metadata, signal_dir } => io::load_corpus(metadata, signal_dir)?,
    };

    let labels = corpus.labels();
    let (train_rows, test_rows) = stratified_split(&corpus);
    let spec = resolve_balance(cfg, train_rows.len())?;
    let balanced = balance(&train_rows, &labels, &spec)?;
    let (train, validation) = validation_split(&balanced, cfg.train.validation_fraction, cfg.split_seed)?;
    if train.is_empty() {
        return Err(ecg_cvae_core::Error::EmptyTrainingSet.into());
    }

    let mut moments = LeadMoments::new(NUM_LEADS);
    for &r in &balanced {
        moments.push_sample(corpus.records()[r].signal());
    }
    let stats = moments.finish()?;
    let balanced_labels = labels.select(&balanced);
    let weights = compute_class_weights(&balanced_labels, cfg.hyp_multiplier)?;

    let before = labels.select(&train_rows).class_counts();
    let label_counts = balanced_labels.class_counts();
    let classes = DiagClass::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let after = spec.target(c).unwrap_or(before[i]);
            ClassBalance {
                class: c,
                before: before[i],
                after,
                target: spec.target(c),
                change_percent: if before[i] == 0 {
                    0.0
                } else {
                    100.0 * (after as f64 - before[i] as f64) / before[i] as f64
                },
                balanced_label_count: label_counts[i],
            }
        })
        .collect();
    let summary = PrepSummary {
        records: corpus.len(),
        train_fold_records: train_rows.len(),
        test_records: test_rows.len(),
        classes,
        balanced_total: balanced.len(),
        train_size: train.len(),
        validation_size: validation.len(),
        test_size: test_rows.len(),
        balance_seed: spec.seed,
        split_seed: cfg.split_seed,
    };
    let splits = SplitFile {
        record_count: corpus.len(),
        balanced,
        train,
        validation,
        test: test_rows,
    };
    io::write_json(&layout.splits(), &splits)?;
    io::write_json(&layout.norm_stats(), &stats)?;
    io::write_json(&layout.class_weights(), &weights)?;
    io::write_json(&layout.prep_summary(), &summary)?;
    log(
        cfg,
        format!(
            "balanced {} rows: train {}, validation {}, test {}",
            summary.balanced_total, summary.train_size, summary.validation_size, summary.test_size
        ),
    );
    Ok(summary)
}

fn read_splits(layout: &Layout, corpus: &Corpus) -> CliResult<SplitFile> {
    let path = layout.splits();
    let splits: SplitFile = io::read_json(&path)?;
    let in_range = |rows: &[usize]| rows.iter().all(|&r| r < corpus.len());
    if splits.record_count != corpus.len()
        || !in_range(&splits.train)
        || !in_range(&splits.validation)
        || !in_range(&splits.test)
    {
        return Err(CliError::malformed(
            &path,
            format!("split indices were written for {} records, corpus has {}", splits.record_count, corpus.len()),
        ));
    }
    Ok(splits)
}

pub fn train(cfg: &RunConfig) -> CliResult<TrainSummary> {
    let layout = Layout::new(&cfg.out);
    let corpus = load_inputs(cfg)?;
    let splits = read_splits(&layout, &corpus)?;
    let stats: NormStats = io::read_json(&layout.norm_stats())?;
    let weights: ClassWeights = io::read_json(&layout.class_weights())?;
    let labels = corpus.labels();
    let train_weights = sample_weights(&labels.select(&splits.train), &weights);
    let validation_weights = sample_weights(&labels.select(&splits.validation), &weights);
    let source = NormalizedCorpus::new(&corpus, &stats)?;
    let data = TrainingData {
        source: &source,
        train: &splits.train,
        train_weights: &train_weights,
        validation: &splits.validation,
        validation_weights: &validation_weights,
    };

    let model = Model::new(cfg.model.clone(), cfg.model_seed)?;
    let counts = model.param_counts();
    log(
        cfg,
        format!(
            "model: {} parameters ({} trainable, {} non-trainable)",
            counts.total, counts.trainable, counts.non_trainable
        ),
    );
    let max_epochs = cfg.train.max_epochs;
    let outcome = train_with_observer(model, &data, &cfg.train, &mut |h| {
        log(
            cfg,
            format!(
                "epoch {:>3}/{max_epochs} lr {:.2e} loss {:.4} acc {:.4} val_loss {:.4} val_acc {:.4}",
                h.epoch, h.lr, h.train_loss, h.train_acc, h.val_loss, h.val_acc
            ),
        )
    })?;

    io::save_checkpoint(&layout.best_checkpoint(), &outcome.best)?;
    io::save_checkpoint(&layout.last_checkpoint(), &outcome.last)?;
    io::write_history(&layout.history(), &outcome.history)?;
    io::write_json(&layout.train_summary(), &outcome.summary)?;
    log(
        cfg,
        format!(
            "stopped after {} epochs ({:?}); best epoch {} val_loss {:.4}",
            outcome.summary.epochs_completed,
            outcome.summary.stop_reason,
            outcome.summary.best_epoch,
            outcome.summary.best_val_loss
        ),
    );
    Ok(outcome.summary)
}

fn describe_mismatch(stored: &ecg_cvae_core::nn::ModelConfig, wanted: &ecg_cvae_core::nn::ModelConfig) -> String {
    let show = |c: &ecg_cvae_core::nn::ModelConfig| serde_json::to_string(c).unwrap_or_default();
    format!("checkpoint holds {} but configuration expects {}", show(stored), show(wanted))
}

/// Test-fold report for the checkpoint at `checkpoint` (default: best).
pub fn evaluate(cfg: &RunConfig, checkpoint: Option<&Path>) -> CliResult<EvaluationReport> {
    let layout = Layout::new(&cfg.out);
    let ckpt_path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| layout.best_checkpoint());
    let model = io::load_checkpoint(&ckpt_path)?;
    if model.config() != &cfg.model {
        return Err(CliError::CheckpointMismatch(describe_mismatch(model.config(), &cfg.model)));
    }
    let stats: NormStats = io::read_json(&layout.norm_stats())?;
    if stats.leads() != model.config().input_channels || stats.sigma.len() != stats.mu.len() {
        return Err(CliError::CheckpointMismatch(format!(
            "normalization statistics cover {} leads, checkpoint expects {}",
            stats.leads(),
            model.config().input_channels
        )));
    }
    let corpus = load_inputs(cfg)?;
    let splits = read_splits(&layout, &corpus)?;
    if splits.test.is_empty() {
        return Err(CliError::Config("test fold is empty".into()));
    }
    let source = NormalizedCorpus::new(&corpus, &stats)?;
    let probs = predict_rows(&model, &source, &splits.test, cfg.train.batch_size)?;
    let truth = corpus.labels().select(&splits.test);
    let (loss, _) = weighted_bce(&probs, &truth.to_dense(), &vec![1.0; splits.test.len()])?;
    let report = evaluation::evaluate(&probs, &truth, cfg.threshold, Some(loss))?;

    io::write_json(&layout.report(), &report)?;
    io::write_bytes(&layout.confusion_csv(), io::confusion_csv(&report).as_bytes())?;
    io::write_bytes(&layout.per_class_csv(), io::per_class_csv(&report).as_bytes())?;
    log(
        cfg,
        format!(
            "test: {} samples, binary accuracy {:.4}, subset accuracy {:.4}, micro P/R {:.4}/{:.4}",
            report.samples, report.binary_accuracy, report.subset_accuracy, report.micro_precision, report.micro_recall
        ),
    );
    Ok(report)
}

/// SVGs for whichever of `history` and `report` are given; returns the files written.
pub fn plot(out: &Path, history: Option<&Path>, report: Option<&Path>) -> CliResult<Vec<PathBuf>> {
    let layout = Layout::new(out);
    let mut written = Vec::new();
    if let Some(path) = history {
        let logs = io::read_history(path)?;
        io::write_bytes(&layout.training_curves(), plot::training_curves_svg(&logs).as_bytes())?;
        written.push(layout.training_curves());
    }
    if let Some(path) = report {
        let report: EvaluationReport = io::read_json(path)?;
        if report.classes.len() != NUM_CLASSES {
            return Err(CliError::malformed(path, format!("expected {NUM_CLASSES} class blocks")));
        }
        let counts = report.confusion();
        for c in &counts.classes {
            let file = layout.confusion_svg(c.class);
            io::write_bytes(&file, plot::confusion_svg(c.class.name(), c).as_bytes())?;
            written.push(file);
        }
        let pooled = counts.pooled();
        let all = ClassConfusion::new(DiagClass::Cd, pooled.tn, pooled.fp, pooled.fn_, pooled.tp);
        io::write_bytes(
            &layout.confusion_overall_svg(),
            plot::confusion_svg("All classes (pooled)", &all).as_bytes(),
        )?;
        written.push(layout.confusion_overall_svg());
    }
    Ok(written)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunAllSummary {
    pub prep: PrepSummary,
    pub train: TrainSummary,
    pub test_binary_accuracy: f64,
    pub final_val_acc: f64,
    pub best_val_acc: f64,
}

pub fn run_all(cfg: &RunConfig) -> CliResult<RunAllSummary> {
    let layout = Layout::new(&cfg.out);
    let prep = prepare(cfg)?;
    let train_summary = train(cfg)?;
    let report = evaluate(cfg, None)?;
    plot(&cfg.out, Some(&layout.history()), Some(&layout.report()))?;
    let history = io::read_history(&layout.history())?;
    let final_val_acc = history.last().map(|h| h.val_acc).unwrap_or(0.0);
    let best_val_acc = history.iter().map(|h| h.val_acc).fold(0.0, f64::max);
    Ok(RunAllSummary {
        prep,
        train: train_summary,
        test_binary_accuracy: report.binary_accuracy,
        final_val_acc,
        best_val_acc,
    })
}
