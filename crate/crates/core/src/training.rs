//! Weighted binary cross-entropy, Adam, and the epoch loop with early
//! stopping, learning-rate reduction on plateau and best-state tracking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, LabelMatrix, LabelSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::evaluation;
use crate::nn::{Gradients, Model, Mode};
use crate::preprocess::NormStats;
use crate::tensor::{SignalBatch, Tensor3};

/// Predictions are clamped to `[PREDICTION_CLAMP, 1 - PREDICTION_CLAMP]` inside the loss.
pub const PREDICTION_CLAMP: f64 = 1e-7;

/// A validation loss counts as an improvement only if it beats the best so far by more than this.
pub const MIN_DELTA: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub min_lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 50,
            validation_fraction: 0.2,
            early_stop_patience: 10,
            plateau_patience: 5,
            plateau_factor: 0.5,
            min_lr: 1e-7,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if self.early_stop_patience == 0 || self.plateau_patience == 0 {
            return bad("patiences must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if self.min_lr.is_nan() || self.min_lr <= 0.0 {
            return bad("min_lr must be positive");
        }
        Ok(())
    }
}

/// `-(1/N) Σ_i w_i Σ_j [y log p + (1-y) log(1-p)]` over row-major `N × 5`
/// buffers, with the gradient with respect to `predictions`. The gradient is
/// zero where a prediction lies outside the clamp interval.
pub fn weighted_bce(predictions: &[f64], targets: &[f64], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    let n = weights.len();
    if predictions.len() != n * NUM_CLASSES {
        return Err(Error::ShapeMismatch {
            what: "prediction length",
            expected: n * NUM_CLASSES,
            found: predictions.len(),
        });
    }
    if targets.len() != n * NUM_CLASSES {
        return Err(Error::ShapeMismatch {
            what: "target length",
            expected: n * NUM_CLASSES,
            found: targets.len(),
        });
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    if !predictions.iter().chain(targets).chain(weights).all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; predictions.len()];
    for (i, &w) in weights.iter().enumerate() {
        let mut row = 0.0;
        for j in 0..NUM_CLASSES {
            let k = i * NUM_CLASSES + j;
            let raw = predictions[k];
            let p = raw.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP);
            let y = targets[k];
            row += y * libm::log(p) + (1.0 - y) * libm::log(1.0 - p);
            if raw == p {
                grad[k] = -w * inv_n * (y / p - (1.0 - y) / (1.0 - p));
            }
        }
        loss -= w * row;
    }
    Ok((loss * inv_n, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a single block at step `t ≥ 1`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for (what, len) in [("gradient block", grads.len()), ("first moment", m.len()), ("second moment", v.len())] {
        if len != params.len() {
            return Err(Error::ShapeMismatch {
                what,
                expected: params.len(),
                found: len,
            });
        }
    }
    if t == 0 {
        return Err(Error::InvalidConfig("Adam step index starts at 1".into()));
    }
    let t = t.min(i32::MAX as u64) as i32;
    let c1 = 1.0 - libm::pow(cfg.beta1, f64::from(t));
    let c2 = 1.0 - libm::pow(cfg.beta2, f64::from(t));
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (libm::sqrt(v_hat) + cfg.epsilon);
    }
    Ok(())
}

/// Adam moments for every trainable block of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &Model) -> Self {
        Self::with_config(model, AdamConfig::default())
    }

    pub fn with_config(model: &Model, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.trainable_blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.blocks.len() != self.m.len() {
            return Err(Error::ShapeMismatch {
                what: "gradient block count",
                expected: self.m.len(),
                found: grads.blocks.len(),
            });
        }
        self.t += 1;
        for (((p, g), m), v) in model
            .trainable_blocks_mut()
            .into_iter()
            .zip(&grads.blocks)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_update(p, g, m, v, self.t, lr, &self.config)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrReduction {
    /// Epoch after which the new rate takes effect.
    pub epoch: usize,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochDecision {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

/// Early stopping and plateau reduction driven by validation loss. The two
/// counters reset together on improvement but otherwise run independently.
#[derive(Clone, Debug, PartialEq)]
pub struct Callbacks {
    lr: f64,
    min_lr: f64,
    factor: f64,
    plateau_patience: usize,
    stop_patience: usize,
    best: f64,
    best_epoch: Option<usize>,
    plateau_wait: usize,
    stop_wait: usize,
    reductions: Vec<LrReduction>,
}

impl Callbacks {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            min_lr: config.min_lr,
            factor: config.plateau_factor,
            plateau_patience: config.plateau_patience,
            stop_patience: config.early_stop_patience,
            best: f64::INFINITY,
            best_epoch: None,
            plateau_wait: 0,
            stop_wait: 0,
            reductions: Vec::new(),
        }
    }

    /// Rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best_epoch.map(|e| (e, self.best))
    }

    pub fn reductions(&self) -> &[LrReduction] {
        &self.reductions
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> EpochDecision {
        let improved = val_loss < self.best - MIN_DELTA;
        let mut lr_reduced = false;
        if improved {
            self.best = val_loss;
            self.best_epoch = Some(epoch);
            self.plateau_wait = 0;
            self.stop_wait = 0;
        } else {
            self.plateau_wait += 1;
            self.stop_wait += 1;
            if self.plateau_wait >= self.plateau_patience && self.lr > self.min_lr {
                self.lr = (self.lr * self.factor).max(self.min_lr);
                self.reductions.push(LrReduction { epoch, lr: self.lr });
                self.plateau_wait = 0;
                lr_reduced = true;
            }
        }
        EpochDecision {
            improved,
            lr_reduced,
            stop: self.stop_wait >= self.stop_patience,
        }
    }
}

/// Random access to `time × channels` samples and their labels.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn time_steps(&self) -> usize;

    fn channels(&self) -> usize;

    /// Writes sample `index` into `out` (`time × channels`, channels fastest).
    fn fill(&self, index: usize, out: &mut [f64]);

    fn labels(&self, index: usize) -> LabelSet;
}

/// Already-normalized signals held in memory.
#[derive(Clone, Debug)]
pub struct InMemorySource {
    signals: SignalBatch,
    labels: LabelMatrix,
}

impl InMemorySource {
    pub fn new(signals: SignalBatch, labels: LabelMatrix) -> Result<Self> {
        if signals.batch() != labels.len() {
            return Err(Error::ShapeMismatch {
                what: "signal rows vs label rows",
                expected: labels.len(),
                found: signals.batch(),
            });
        }
        Ok(Self { signals, labels })
    }

    pub fn signals(&self) -> &SignalBatch {
        &self.signals
    }
}

impl SampleSource for InMemorySource {
    fn len(&self) -> usize {
        self.signals.batch()
    }

    fn time_steps(&self) -> usize {
        self.signals.time()
    }

    fn channels(&self) -> usize {
        self.signals.channels()
    }

    fn fill(&self, index: usize, out: &mut [f64]) {
        out.copy_from_slice(self.signals.sample(index));
    }

    fn labels(&self, index: usize) -> LabelSet {
        self.labels.row(index)
    }
}

/// Raw corpus records normalized on the fly, so the full `f64` copy never exists.
#[derive(Clone, Copy, Debug)]
pub struct NormalizedCorpus<'a> {
    corpus: &'a Corpus,
    stats: &'a NormStats,
}

impl<'a> NormalizedCorpus<'a> {
    pub fn new(corpus: &'a Corpus, stats: &'a NormStats) -> Result<Self> {
        if stats.leads() != crate::dataset::NUM_LEADS {
            return Err(Error::LeadCountMismatch {
                expected: crate::dataset::NUM_LEADS,
                found: stats.leads(),
            });
        }
        Ok(Self { corpus, stats })
    }
}

impl SampleSource for NormalizedCorpus<'_> {
    fn len(&self) -> usize {
        self.corpus.len()
    }

    fn time_steps(&self) -> usize {
        crate::dataset::SIGNAL_LEN
    }

    fn channels(&self) -> usize {
        crate::dataset::NUM_LEADS
    }

    fn fill(&self, index: usize, out: &mut [f64]) {
        self.stats.normalize_into(self.corpus.records()[index].signal(), out);
    }

    fn labels(&self, index: usize) -> LabelSet {
        self.corpus.records()[index].labels()
    }
}

/// Stacks the given source rows into a batch with its `n × 5` target buffer.
pub fn gather<S: SampleSource + ?Sized>(source: &S, rows: &[usize]) -> Result<(Tensor3, Vec<f64>)> {
    let (t, c) = (source.time_steps(), source.channels());
    let mut x = Tensor3::zeros(rows.len(), t, c);
    let mut targets = Vec::with_capacity(rows.len() * NUM_CLASSES);
    for (b, &row) in rows.iter().enumerate() {
        if row >= source.len() {
            return Err(Error::ShapeMismatch {
                what: "row index bound",
                expected: source.len(),
                found: row,
            });
        }
        source.fill(row, x.sample_mut(b));
        targets.extend(source.labels(row).to_targets());
    }
    Ok((x, targets))
}

/// Inference-mode probabilities for `rows`, `rows.len() × 5`, in chunks of `batch_size`.
pub fn predict_rows<S: SampleSource + ?Sized>(
    model: &Model,
    source: &S,
    rows: &[usize],
    batch_size: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(rows.len() * NUM_CLASSES);
    for chunk in rows.chunks(batch_size.max(1)) {
        let (x, _) = gather(source, chunk)?;
        out.extend(model.predict(&x)?);
    }
    Ok(out)
}

/// Training and validation rows of one source, each with per-row loss weights.
#[derive(Clone, Copy, Debug)]
pub struct TrainingData<'a, S: ?Sized> {
    pub source: &'a S,
    pub train: &'a [usize],
    pub train_weights: &'a [f64],
    pub validation: &'a [usize],
    pub validation_weights: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Rate in effect during this epoch.
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    /// Micro-averaged over classes.
    pub val_precision: f64,
    pub val_recall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub stop_reason: StopReason,
    pub epochs_completed: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub lr_reductions: Vec<LrReduction>,
    pub final_lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// State after the epoch with the lowest validation loss.
    pub best: Model,
    /// State after the last completed epoch.
    pub last: Model,
    pub history: Vec<EpochLog>,
    pub summary: TrainSummary,
}

pub fn train<S: SampleSource + ?Sized>(model: Model, data: &TrainingData<'_, S>, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(model, data, config, &mut |_| {})
}

/// [`train`], calling `observer` after every completed epoch.
pub fn train_with_observer<S: SampleSource + ?Sized>(
    mut model: Model,
    data: &TrainingData<'_, S>,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if data.validation.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    if data.train_weights.len() != data.train.len() {
        return Err(Error::ShapeMismatch {
            what: "training weight count",
            expected: data.train.len(),
            found: data.train_weights.len(),
        });
    }
    if data.validation_weights.len() != data.validation.len() {
        return Err(Error::ShapeMismatch {
            what: "validation weight count",
            expected: data.validation.len(),
            found: data.validation_weights.len(),
        });
    }
    if config.batch_size > data.train.len() {
        return Err(Error::InvalidConfig(format!(
            "batch_size {} exceeds training set size {}",
            config.batch_size,
            data.train.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut adam = Adam::new(&model);
    let mut callbacks = Callbacks::new(config);
    let mut history = Vec::new();
    let mut best = model.clone();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let lr = callbacks.lr();
        order.shuffle(&mut rng);
        let non_finite = |_| Error::NonFiniteLoss { epoch };

        let mut loss_sum = 0.0;
        let mut train_counts = evaluation::ConfusionCounts::zero();
        for chunk in order.chunks(config.batch_size) {
            let rows: Vec<usize> = chunk.iter().map(|&p| data.train[p]).collect();
            let weights: Vec<f64> = chunk.iter().map(|&p| data.train_weights[p]).collect();
            let (x, targets) = gather(data.source, &rows)?;
            let (probs, cache) = model.forward(&x, Mode::Train)?;
            let (loss, grad) = weighted_bce(&probs, &targets, &weights).map_err(non_finite)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_sum += loss * rows.len() as f64;
            train_counts.merge(&batch_confusion(&probs, &targets)?);
            let grads = model.backward(&cache, &grad)?;
            if !grads.flat().all(f64::is_finite) {
                return Err(Error::NonFiniteLoss { epoch });
            }
            adam.step(&mut model, &grads, lr)?;
        }
        let train_loss = loss_sum / data.train.len() as f64;
        let train_acc = accuracy(&train_counts);

        let val_probs = predict_rows(&model, data.source, data.validation, config.batch_size)?;
        let val_targets: Vec<f64> = data
            .validation
            .iter()
            .flat_map(|&r| data.source.labels(r).to_targets())
            .collect();
        let (val_loss, _) = weighted_bce(&val_probs, &val_targets, data.validation_weights).map_err(non_finite)?;
        if !(val_loss.is_finite() && train_loss.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let val_counts = batch_confusion(&val_probs, &val_targets)?;
        let pooled = val_counts.pooled();
        let frac = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

        let log = EpochLog {
            epoch,
            lr,
            train_loss,
            train_acc,
            val_loss,
            val_acc: accuracy(&val_counts),
            val_precision: frac(pooled.tp, pooled.tp + pooled.fp),
            val_recall: frac(pooled.tp, pooled.tp + pooled.fn_),
        };
        history.push(log);
        observer(&log);

        let decision = callbacks.observe(epoch, val_loss);
        if decision.improved {
            best = model.clone();
        }
        if decision.stop {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    let (best_epoch, best_val_loss) = callbacks.best().ok_or(Error::EmptyValidationSet)?;
    let summary = TrainSummary {
        stop_reason,
        epochs_completed: history.len(),
        best_epoch,
        best_val_loss,
        lr_reductions: callbacks.reductions().to_vec(),
        final_lr: callbacks.lr(),
    };
    Ok(TrainOutcome {
        best,
        last: model,
        history,
        summary,
    })
}

fn batch_confusion(probs: &[f64], targets: &[f64]) -> Result<evaluation::ConfusionCounts> {
    let pred = evaluation::binarize(probs, evaluation::DEFAULT_THRESHOLD)?;
    let truth: LabelMatrix = targets
        .chunks_exact(NUM_CLASSES)
        .map(|row| LabelSet::from_multi_hot(&core::array::from_fn(|j| u8::from(row[j] >= 0.5))))
        .collect();
    evaluation::confusion(&pred, &truth)
}

fn accuracy(counts: &evaluation::ConfusionCounts) -> f64 {
    let pooled = counts.pooled();
    let total = pooled.total();
    if total == 0 {
        0.0
    } else {
        (pooled.tp + pooled.tn) as f64 / total as f64
    }
}
