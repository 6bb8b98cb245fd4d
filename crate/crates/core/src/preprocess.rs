//! Fold split, targeted class balancing, lead-wise z-scoring and
//! inverse-frequency class weights.

use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, DiagClass, LabelMatrix, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tensor::SignalBatch;

/// Stability constant added to every lead's standard deviation.
pub const NORM_EPSILON: f64 = 1e-8;
pub const DEFAULT_HYP_MULTIPLIER: f64 = 1.5;
pub const TEST_FOLD: u8 = 10;

/// Rows of folds 1..=9 and of fold 10, each in corpus order.
pub fn stratified_split(corpus: &Corpus) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, r) in corpus.records().iter().enumerate() {
        if r.strat_fold() == TEST_FOLD {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Target contribution size per class; classes without a target are kept as-is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub targets: [Option<usize>; NUM_CLASSES],
    pub seed: u64,
}

impl BalanceSpec {
    pub fn new(targets: &[(DiagClass, usize)], seed: u64) -> Result<Self> {
        let mut spec = Self {
            targets: [None; NUM_CLASSES],
            seed,
        };
        for &(c, t) in targets {
            if t == 0 {
                return Err(Error::InvalidTarget(c));
            }
            spec.targets[c.index()] = Some(t);
        }
        Ok(spec)
    }

    /// HYP → 4000 (oversampled), NORM → 4000 (downsampled).
    pub fn standard(seed: u64) -> Self {
        let mut targets = [None; NUM_CLASSES];
        targets[DiagClass::Hyp.index()] = Some(4000);
        targets[DiagClass::Norm.index()] = Some(4000);
        Self { targets, seed }
    }

    pub fn unbalanced(seed: u64) -> Self {
        Self {
            targets: [None; NUM_CLASSES],
            seed,
        }
    }

    pub fn target(&self, class: DiagClass) -> Option<usize> {
        self.targets[class.index()]
    }
}

impl Default for BalanceSpec {
    fn default() -> Self {
        Self::standard(0)
    }
}

/// Per-class resampling of `train_rows` (indices into `labels`).
///
/// For each class in canonical order the rows carrying that label are
/// collected. A class with a target larger than its membership keeps every
/// member and adds `target - n` draws with replacement; a smaller target keeps
/// a uniformly drawn subset without replacement. The five lists are
/// concatenated, so multi-label rows appear once per class they carry.
pub fn balance(train_rows: &[usize], labels: &LabelMatrix, spec: &BalanceSpec) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::new();
    for c in DiagClass::ALL {
        let members: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|&r| labels.row(r).contains(c))
            .collect();
        let Some(target) = spec.target(c) else {
            out.extend_from_slice(&members);
            continue;
        };
        if target == 0 {
            return Err(Error::InvalidTarget(c));
        }
        if members.is_empty() {
            return Err(Error::EmptyClass(c));
        }
        let n = members.len();
        if target >= n {
            out.extend_from_slice(&members);
            out.extend((n..target).map(|_| members[rng.random_range(0..n)]));
        } else {
            out.extend(index::sample(&mut rng, n, target).into_iter().map(|i| members[i]));
        }
    }
    Ok(out)
}

/// Seeded shuffle of the balanced positions; the last `floor(n * fraction)`
/// become validation. Returned values are row ids (duplicates possible).
pub fn validation_split(balanced: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "validation fraction {fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = balanced.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_val = libm::floor(balanced.len() as f64 * fraction) as usize;
    let validation = order.split_off(order.len() - n_val);
    Ok((order, validation))
}

/// Train (balanced, post validation split), validation and test row lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-lead mean and population standard deviation of the training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub epsilon: f64,
}

/// Streaming per-lead moments, merged sample by sample with Chan's update.
#[derive(Clone, Debug)]
pub struct LeadMoments {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl LeadMoments {
    pub fn new(leads: usize) -> Self {
        Self {
            count: 0,
            mean: alloc::vec![0.0; leads],
            m2: alloc::vec![0.0; leads],
        }
    }

    /// Adds one `time × leads` sample.
    pub fn push_sample<T: Copy + Into<f64>>(&mut self, sample: &[T]) {
        let leads = self.mean.len();
        let time = sample.len() / leads;
        if time == 0 {
            return;
        }
        // Shifted by the first row so a constant lead has an exact mean.
        let shift: Vec<f64> = sample[..leads].iter().map(|&v| v.into()).collect();
        let mut local_mean = alloc::vec![0.0; leads];
        for row in sample.chunks_exact(leads) {
            for j in 0..leads {
                local_mean[j] += row[j].into() - shift[j];
            }
        }
        for j in 0..leads {
            local_mean[j] = shift[j] + local_mean[j] / time as f64;
        }
        let mut local_m2 = alloc::vec![0.0; leads];
        for row in sample.chunks_exact(leads) {
            for j in 0..leads {
                let d = row[j].into() - local_mean[j];
                local_m2[j] += d * d;
            }
        }

        let n_a = self.count as f64;
        let n_b = time as f64;
        let n = n_a + n_b;
        for j in 0..leads {
            let delta = local_mean[j] - self.mean[j];
            self.mean[j] += delta * (n_b / n);
            self.m2[j] += local_m2[j] + delta * delta * n_a * n_b / n;
        }
        self.count += time as u64;
    }

    pub fn finish(&self) -> Result<NormStats> {
        if self.count == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let n = self.count as f64;
        Ok(NormStats {
            mu: self.mean.clone(),
            sigma: self.m2.iter().map(|m2| libm::sqrt(m2 / n)).collect(),
            epsilon: NORM_EPSILON,
        })
    }
}

/// μ_j and σ_j over every sample and time step of `train`.
pub fn fit_norm_stats(train: &SignalBatch) -> Result<NormStats> {
    if train.batch() == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut moments = LeadMoments::new(train.channels());
    for b in 0..train.batch() {
        moments.push_sample(train.sample(b));
    }
    moments.finish()
}

impl NormStats {
    pub fn leads(&self) -> usize {
        self.mu.len()
    }

    /// Normalizes one raw `time × leads` sample into `out`.
    pub fn normalize_into<T: Copy + Into<f64>>(&self, raw: &[T], out: &mut [f64]) {
        let leads = self.leads();
        for (src, dst) in raw.chunks_exact(leads).zip(out.chunks_exact_mut(leads)) {
            for j in 0..leads {
                dst[j] = (src[j].into() - self.mu[j]) / (self.sigma[j] + self.epsilon);
            }
        }
    }
}

/// `(x - μ_j) / (σ_j + ε)` per lead.
pub fn apply_norm(signals: &SignalBatch, stats: &NormStats) -> Result<SignalBatch> {
    if signals.channels() != stats.leads() {
        return Err(Error::LeadCountMismatch {
            expected: stats.leads(),
            found: signals.channels(),
        });
    }
    let mut out = signals.clone();
    let (batch, _, _) = signals.dims();
    for b in 0..batch {
        stats.normalize_into(signals.sample(b), out.sample_mut(b));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub base: [f64; NUM_CLASSES],
    pub hyp_multiplier: f64,
    #[serde(rename = "final")]
    pub adjusted: [f64; NUM_CLASSES],
}

/// `w_j = n_total / (n_classes * n_j)` over the balanced label matrix, with the
/// HYP weight additionally scaled by `hyp_multiplier`.
pub fn compute_class_weights(labels: &LabelMatrix, hyp_multiplier: f64) -> Result<ClassWeights> {
    if !(hyp_multiplier > 0.0 && hyp_multiplier.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!(
            "hyp multiplier must be positive, got {hyp_multiplier}"
        )));
    }
    let counts = labels.class_counts();
    let n_total = labels.len() as f64;
    let mut base = [0.0; NUM_CLASSES];
    for c in DiagClass::ALL {
        let n_j = counts[c.index()];
        if n_j == 0 {
            return Err(Error::ZeroClassCount(c));
        }
        base[c.index()] = n_total / (NUM_CLASSES as f64 * n_j as f64);
    }
    let mut adjusted = base;
    adjusted[DiagClass::Hyp.index()] *= hyp_multiplier;
    Ok(ClassWeights {
        base,
        hyp_multiplier,
        adjusted,
    })
}

/// Mean adjusted class weight over each row's positive labels; 1.0 for rows
/// without any positive label.
pub fn sample_weights(labels: &LabelMatrix, weights: &ClassWeights) -> Vec<f64> {
    labels
        .rows()
        .iter()
        .map(|row| {
            if row.is_empty() {
                1.0
            } else {
                row.iter().map(|c| weights.adjusted[c.index()]).sum::<f64>() / row.len() as f64
            }
        })
        .collect()
}
