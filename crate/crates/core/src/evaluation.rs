//! Multi-label metrics: per-class confusion counts, precision / recall / F1
//! (per class, micro, macro, support-weighted), binary accuracy, Hamming loss,
//! subset accuracy and ROC-AUC.
//!
//! Zero denominators yield 0 for precision, recall and F1.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{DiagClass, LabelMatrix, LabelSet, NUM_CLASSES};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `probability >= threshold` per element of a row-major `n × 5` buffer.
pub fn binarize(probabilities: &[f64], threshold: f64) -> Result<LabelMatrix> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(alloc::format!("threshold {threshold} outside (0, 1)")));
    }
    check_rows(probabilities.len())?;
    Ok(probabilities
        .chunks_exact(NUM_CLASSES)
        .map(|row| {
            let mut set = LabelSet::EMPTY;
            for c in DiagClass::ALL {
                if row[c.index()] >= threshold {
                    set.insert(c);
                }
            }
            set
        })
        .collect())
}

fn check_rows(len: usize) -> Result<()> {
    if !len.is_multiple_of(NUM_CLASSES) {
        return Err(Error::ShapeMismatch {
            what: "score buffer length (multiple of 5)",
            expected: len / NUM_CLASSES * NUM_CLASSES,
            found: len,
        });
    }
    Ok(())
}

fn check_same_rows(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            what: "prediction rows vs truth rows",
            expected: truth.len(),
            found: pred.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassConfusion {
    pub class: DiagClass,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ClassConfusion {
    pub fn new(class: DiagClass, tn: u64, fp: u64, fn_: u64, tp: u64) -> Self {
        Self { class, tn, fp, fn_, tp }
    }

    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

/// Confusion counts for the five classes in canonical order. Counts from
/// disjoint batches add.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub classes: [ClassConfusion; NUM_CLASSES],
}

impl ConfusionCounts {
    pub fn zero() -> Self {
        Self {
            classes: DiagClass::ALL.map(|c| ClassConfusion::new(c, 0, 0, 0, 0)),
        }
    }

    /// From `(tn, fp, fn, tp)` rows in canonical class order.
    pub fn from_counts(counts: [(u64, u64, u64, u64); NUM_CLASSES]) -> Self {
        Self {
            classes: core::array::from_fn(|i| {
                let (tn, fp, fn_, tp) = counts[i];
                ClassConfusion::new(DiagClass::ALL[i], tn, fp, fn_, tp)
            }),
        }
    }

    pub fn get(&self, class: DiagClass) -> &ClassConfusion {
        &self.classes[class.index()]
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            a.tn += b.tn;
            a.fp += b.fp;
            a.fn_ += b.fn_;
            a.tp += b.tp;
        }
    }

    /// Samples evaluated (taken from the first class; all classes agree).
    pub fn samples(&self) -> u64 {
        self.classes[0].total()
    }

    /// Element-wise sum over classes.
    pub fn pooled(&self) -> ClassConfusion {
        let mut sum = (0, 0, 0, 0);
        for c in &self.classes {
            sum.0 += c.tn;
            sum.1 += c.fp;
            sum.2 += c.fn_;
            sum.3 += c.tp;
        }
        ClassConfusion::new(DiagClass::Cd, sum.0, sum.1, sum.2, sum.3)
    }
}

pub fn confusion(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<ConfusionCounts> {
    check_same_rows(pred, truth)?;
    let mut counts = ConfusionCounts::zero();
    for (p, t) in pred.rows().iter().zip(truth.rows()) {
        for c in DiagClass::ALL {
            let cell = &mut counts.classes[c.index()];
            match (p.contains(c), t.contains(c)) {
                (false, false) => cell.tn += 1,
                (true, false) => cell.fp += 1,
                (false, true) => cell.fn_ += 1,
                (true, true) => cell.tp += 1,
            }
        }
    }
    Ok(counts)
}

#[inline]
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[inline]
fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: DiagClass,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn per_class_metrics(c: &ConfusionCounts) -> [ClassMetrics; NUM_CLASSES] {
    c.classes.map(|cc| {
        let precision = ratio(cc.tp, cc.tp + cc.fp);
        let recall = ratio(cc.tp, cc.tp + cc.fn_);
        ClassMetrics {
            class: cc.class,
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: cc.tp + cc.fn_,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub hamming_loss: f64,
    pub binary_accuracy: f64,
}

pub fn aggregate_metrics(c: &ConfusionCounts, per_class: &[ClassMetrics; NUM_CLASSES]) -> AggregateMetrics {
    let pooled = c.pooled();
    let micro_precision = ratio(pooled.tp, pooled.tp + pooled.fp);
    let micro_recall = ratio(pooled.tp, pooled.tp + pooled.fn_);

    let k = NUM_CLASSES as f64;
    let macro_of = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let support: u64 = per_class.iter().map(|m| m.support).sum();
    let weighted_of = |f: fn(&ClassMetrics) -> f64| {
        if support == 0 {
            0.0
        } else {
            per_class.iter().map(|m| m.support as f64 * f(m)).sum::<f64>() / support as f64
        }
    };

    let hamming_loss = ratio(pooled.fp + pooled.fn_, c.samples() * NUM_CLASSES as u64);
    AggregateMetrics {
        micro_precision,
        micro_recall,
        micro_f1: harmonic(micro_precision, micro_recall),
        macro_precision: macro_of(|m| m.precision),
        macro_recall: macro_of(|m| m.recall),
        macro_f1: macro_of(|m| m.f1),
        weighted_precision: weighted_of(|m| m.precision),
        weighted_recall: weighted_of(|m| m.recall),
        weighted_f1: weighted_of(|m| m.f1),
        hamming_loss,
        binary_accuracy: 1.0 - hamming_loss,
    }
}

/// Fraction of rows whose whole label vector is predicted exactly; 0 for no rows.
pub fn subset_accuracy(pred: &LabelMatrix, truth: &LabelMatrix) -> Result<f64> {
    check_same_rows(pred, truth)?;
    let exact = pred.rows().iter().zip(truth.rows()).filter(|(p, t)| p == t).count();
    Ok(ratio(exact as u64, truth.len() as u64))
}

/// Area under the ROC curve by a trapezoidal sweep over descending score
/// groups; tied scores form one diagonal segment, which makes the result the
/// Mann-Whitney statistic `P(pos > neg) + ½ P(pos = neg)`. `None` when either
/// class is absent.
pub fn binary_roc_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    debug_assert_eq!(scores.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
    }
    Some(area / (n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub per_class: [Option<f64>; NUM_CLASSES],
    /// Mean over classes with a defined AUC.
    pub macro_auc: Option<f64>,
    /// Classes lacking a positive or a negative example.
    pub undefined: Vec<DiagClass>,
}

/// Per-class and macro AUC from row-major `n × 5` scores.
pub fn roc_auc(scores: &[f64], truth: &LabelMatrix) -> Result<AucResult> {
    check_rows(scores.len())?;
    if scores.len() / NUM_CLASSES != truth.len() {
        return Err(Error::ShapeMismatch {
            what: "score rows vs truth rows",
            expected: truth.len(),
            found: scores.len() / NUM_CLASSES,
        });
    }
    let mut per_class = [None; NUM_CLASSES];
    let mut undefined = Vec::new();
    for c in DiagClass::ALL {
        let column: Vec<f64> = scores.iter().skip(c.index()).step_by(NUM_CLASSES).copied().collect();
        let positive: Vec<bool> = truth.rows().iter().map(|r| r.contains(c)).collect();
        per_class[c.index()] = binary_roc_auc(&column, &positive);
        if per_class[c.index()].is_none() {
            undefined.push(c);
        }
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
    Ok(AucResult {
        per_class,
        macro_auc,
        undefined,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: DiagClass,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub auc: Option<f64>,
}

/// Everything reported for a test set. `micro_*` are pooled over classes,
/// `macro_*` are unweighted class means and `weighted_*` are support-weighted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub samples: u64,
    /// Unweighted binary cross-entropy, when the caller supplies it.
    pub loss: Option<f64>,
    pub binary_accuracy: f64,
    pub hamming_loss: f64,
    pub subset_accuracy: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub macro_auc: Option<f64>,
    pub auc_undefined: Vec<DiagClass>,
    pub classes: Vec<ClassReport>,
}

impl EvaluationReport {
    pub fn confusion(&self) -> ConfusionCounts {
        ConfusionCounts {
            classes: core::array::from_fn(|i| {
                let c = &self.classes[i];
                ClassConfusion::new(c.class, c.tn, c.fp, c.fn_, c.tp)
            }),
        }
    }
}

/// Assembles a report from counts, subset accuracy and AUC computed elsewhere.
pub fn build_report(
    threshold: f64,
    counts: &ConfusionCounts,
    subset_accuracy: f64,
    auc: &AucResult,
    loss: Option<f64>,
) -> EvaluationReport {
    let per_class = per_class_metrics(counts);
    let agg = aggregate_metrics(counts, &per_class);
    EvaluationReport {
        threshold,
        samples: counts.samples(),
        loss,
        binary_accuracy: agg.binary_accuracy,
        hamming_loss: agg.hamming_loss,
        subset_accuracy,
        micro_precision: agg.micro_precision,
        micro_recall: agg.micro_recall,
        micro_f1: agg.micro_f1,
        macro_precision: agg.macro_precision,
        macro_recall: agg.macro_recall,
        macro_f1: agg.macro_f1,
        weighted_precision: agg.weighted_precision,
        weighted_recall: agg.weighted_recall,
        weighted_f1: agg.weighted_f1,
        macro_auc: auc.macro_auc,
        auc_undefined: auc.undefined.clone(),
        classes: per_class
            .iter()
            .zip(&counts.classes)
            .map(|(m, cc)| ClassReport {
                class: m.class,
                tn: cc.tn,
                fp: cc.fp,
                fn_: cc.fn_,
                tp: cc.tp,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
                auc: auc.per_class[m.class.index()],
            })
            .collect(),
    }
}

/// Full report from `n × 5` probabilities and ground truth.
pub fn evaluate(probabilities: &[f64], truth: &LabelMatrix, threshold: f64, loss: Option<f64>) -> Result<EvaluationReport> {
    let pred = binarize(probabilities, threshold)?;
    let counts = confusion(&pred, truth)?;
    let subset = subset_accuracy(&pred, truth)?;
    let auc = roc_auc(probabilities, truth)?;
    Ok(build_report(threshold, &counts, subset, &auc, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rows(bits: &[[u8; 5]]) -> LabelMatrix {
        bits.iter().map(LabelSet::from_multi_hot).collect()
    }

    /// Reference confusion counts in canonical order (CD, HYP, MI, NORM, STTC).
    fn reference_counts() -> ConfusionCounts {
        ConfusionCounts::from_counts([
            (1575, 130, 150, 348),
            (1843, 97, 131, 132),
            (1511, 139, 178, 375),
            (1014, 225, 87, 877),
            (1501, 179, 115, 408),
        ])
    }

    #[test]
    fn reference_counts_reproduce_reference_metrics() {
        let c = reference_counts();
        assert_eq!(c.samples(), 2203);
        let per = per_class_metrics(&c);
        let expected = [
            (0.728, 0.699, 0.713, 498),
            (0.576, 0.502, 0.537, 263),
            (0.730, 0.678, 0.703, 553),
            (0.796, 0.910, 0.849, 964),
            (0.695, 0.780, 0.735, 523),
        ];
        for (m, (p, r, f, s)) in per.iter().zip(expected) {
            assert!((m.precision - p).abs() <= 1e-3, "{:?}", m);
            assert!((m.recall - r).abs() <= 1e-3, "{:?}", m);
            assert!((m.f1 - f).abs() <= 1e-3, "{:?}", m);
            assert_eq!(m.support, s);
        }
        assert_eq!(per.iter().map(|m| m.support).sum::<u64>(), 2801);
        let agg = aggregate_metrics(&c, &per);
        assert!((agg.hamming_loss - 0.1299).abs() <= 5e-4);
        assert!((agg.binary_accuracy - 0.8701).abs() <= 5e-4);
        assert!((agg.micro_precision - 0.7354).abs() <= 5e-4);
        assert!((agg.micro_recall - 0.7640).abs() <= 5e-4);
        assert!((agg.weighted_precision - 0.731).abs() <= 1e-3);
        assert!((agg.weighted_recall - 0.764).abs() <= 1e-3);
        assert!((agg.weighted_f1 - 0.745).abs() <= 1e-3);
        assert_eq!(agg.micro_recall, agg.weighted_recall);
        // errors / elements, counted by hand
        assert_eq!(agg.hamming_loss, 1431.0 / 11015.0);
    }

    #[test]
    fn binarize_is_boundary_inclusive() {
        let p = [0.49, 0.50, 0.51, 0.0, 1.0];
        assert_eq!(binarize(&p, 0.5).unwrap().row(0).to_multi_hot(), [0, 1, 1, 0, 1]);
        assert!(binarize(&[0.0; 10], 0.5).unwrap().rows().iter().all(|r| r.is_empty()));
        let q = [0.5, 0.5 + 1e-13, 0.7, 0.2, 0.5];
        let a = binarize(&q, 0.5).unwrap().row(0).to_multi_hot();
        let b = binarize(&q, 0.5 + 1e-12).unwrap().row(0).to_multi_hot();
        let differs: Vec<usize> = (0..5).filter(|&i| a[i] != b[i]).collect();
        assert_eq!(differs, vec![0, 1, 4]);
        assert!(binarize(&q, 0.0).is_err());
    }

    #[test]
    fn hand_counted_confusion() {
        let truth = rows(&[[1, 0, 0, 0, 0], [0, 0, 0, 0, 0]]);
        let pred = rows(&[[0, 0, 0, 0, 0], [1, 0, 0, 0, 0]]);
        let c = confusion(&pred, &truth).unwrap();
        assert_eq!(*c.get(DiagClass::Cd), ClassConfusion::new(DiagClass::Cd, 0, 1, 1, 0));
        let perfect = confusion(&truth, &truth).unwrap();
        assert!(perfect.classes.iter().all(|cc| cc.fp == 0 && cc.fn_ == 0 && cc.total() == 2));
        assert!(confusion(&pred, &rows(&[[0; 5]])).is_err());
    }

    #[test]
    fn degenerate_counts_give_zero_metrics() {
        let m = per_class_metrics(&ConfusionCounts::zero());
        for cm in m {
            assert_eq!((cm.precision, cm.recall, cm.f1, cm.support), (0.0, 0.0, 0.0, 0));
        }
    }

    #[test]
    fn perfect_predictions_aggregate_to_one() {
        let truth = rows(&[[1, 0, 1, 0, 0], [0, 1, 0, 1, 1], [1, 1, 1, 1, 1]]);
        let c = confusion(&truth, &truth).unwrap();
        let agg = aggregate_metrics(&c, &per_class_metrics(&c));
        assert_eq!(agg.hamming_loss, 0.0);
        for v in [agg.micro_precision, agg.micro_recall, agg.weighted_f1, agg.binary_accuracy, agg.macro_f1] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn subset_accuracy_hand_count() {
        let truth = rows(&[[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0], [0, 0, 0, 1, 0]]);
        let pred = rows(&[[1, 0, 0, 0, 0], [0, 1, 1, 0, 0], [0, 0, 0, 0, 0], [1, 0, 0, 1, 0]]);
        assert_eq!(subset_accuracy(&pred, &truth).unwrap(), 0.25);
        assert_eq!(subset_accuracy(&truth, &truth).unwrap(), 1.0);
    }

    /// Every prediction/truth pair over 2 samples × 2 active classes.
    #[test]
    fn subset_accuracy_never_exceeds_binary_accuracy() {
        for pred_bits in 0u8..16 {
            for truth_bits in 0u8..16 {
                let mk = |bits: u8| -> LabelMatrix {
                    (0..2)
                        .map(|s| {
                            let mut hot = [0u8; 5];
                            hot[0] = (bits >> (2 * s)) & 1;
                            hot[1] = (bits >> (2 * s + 1)) & 1;
                            LabelSet::from_multi_hot(&hot)
                        })
                        .collect()
                };
                let (pred, truth) = (mk(pred_bits), mk(truth_bits));
                let c = confusion(&pred, &truth).unwrap();
                let agg = aggregate_metrics(&c, &per_class_metrics(&c));
                assert!(subset_accuracy(&pred, &truth).unwrap() <= agg.binary_accuracy);
            }
        }
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(binary_roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), Some(1.0));
        assert_eq!(binary_roc_auc(&[0.3; 6], &[true, false, true, false, false, true]), Some(0.5));
        assert_eq!(binary_roc_auc(&[0.1, 0.2], &[true, true]), None);
        let truth = rows(&[[1, 0, 0, 0, 0], [0, 0, 0, 0, 0]]);
        let auc = roc_auc(&[0.9, 0.1, 0.1, 0.1, 0.1, 0.2, 0.1, 0.1, 0.1, 0.1], &truth).unwrap();
        assert_eq!(auc.per_class[0], Some(1.0));
        assert_eq!(auc.macro_auc, Some(1.0));
        assert_eq!(auc.undefined.len(), 4);
    }

    fn brute_force_auc(scores: &[f64], positive: &[bool]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if positive[i] && !positive[j] {
                    pairs += 1.0;
                    if si > sj {
                        wins += 1.0;
                    } else if si == sj {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_count(seed in any::<u64>(), n in 2usize..40, levels in 2u32..10) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
            let mut positive: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            positive[0] = true;
            positive[1] = false;
            let fast = binary_roc_auc(&scores, &positive).unwrap();
            prop_assert!((fast - brute_force_auc(&scores, &positive)).abs() <= 1e-12);
            // strictly increasing transform
            let warped: Vec<f64> = scores.iter().map(|s| libm::exp(3.0 * s) - 7.0).collect();
            prop_assert_eq!(binary_roc_auc(&warped, &positive).unwrap(), fast);
        }

        #[test]
        fn accuracy_and_hamming_sum_to_one(bits in prop::collection::vec((0u8..32, 0u8..32), 1..60)) {
            let pred: LabelMatrix = bits.iter().map(|&(p, _)| LabelSet::from_multi_hot(&core::array::from_fn(|i| (p >> i) & 1))).collect();
            let truth: LabelMatrix = bits.iter().map(|&(_, t)| LabelSet::from_multi_hot(&core::array::from_fn(|i| (t >> i) & 1))).collect();
            let c = confusion(&pred, &truth).unwrap();
            let per = per_class_metrics(&c);
            let agg = aggregate_metrics(&c, &per);
            prop_assert_eq!(agg.binary_accuracy + agg.hamming_loss, 1.0);
            prop_assert!((agg.micro_recall - agg.weighted_recall).abs() <= 1e-12);
            for cc in &c.classes {
                prop_assert_eq!(cc.total(), bits.len() as u64);
            }
            for (m, cc) in per.iter().zip(&c.classes) {
                prop_assert_eq!(m.support, cc.tp + cc.fn_);
            }
        }

        #[test]
        fn metrics_ignore_sample_order(seed in any::<u64>(), n in 2usize..40) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs: Vec<f64> = (0..n * 5).map(|_| rng.random::<f64>()).collect();
            let truth: Vec<LabelSet> = (0..n).map(|_| LabelSet::from_multi_hot(&core::array::from_fn(|_| rng.random_range(0..2u8)))).collect();
            let report = evaluate(&probs, &LabelMatrix::new(truth.clone()), 0.5, None).unwrap();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let probs2: Vec<f64> = order.iter().flat_map(|&i| probs[i * 5..i * 5 + 5].to_vec()).collect();
            let truth2: LabelMatrix = order.iter().map(|&i| truth[i]).collect();
            let report2 = evaluate(&probs2, &truth2, 0.5, None).unwrap();
            prop_assert_eq!(report.confusion(), report2.confusion());
            prop_assert_eq!(report.subset_accuracy, report2.subset_accuracy);
            prop_assert_eq!(report.macro_auc, report2.macro_auc);
            prop_assert_eq!(report.weighted_f1, report2.weighted_f1);
        }
    }
}
