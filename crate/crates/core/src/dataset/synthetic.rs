//! Deterministic pseudo-ECG corpora with label-conditioned morphology.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Corpus, DiagClass, EcgRecord, LabelSet, NUM_CLASSES, NUM_FOLDS, NUM_LEADS, SIGNAL_LEN};
use crate::error::{Error, Result};

/// Marginal superclass frequencies of the PTB-XL 100 Hz release, canonical order.
pub const PTBXL_CLASS_MIX: [f64; NUM_CLASSES] = [0.225, 0.122, 0.252, 0.437, 0.241];

/// QRS amplitude multiplier for HYP.
pub const HYP_QRS_GAIN: f64 = 1.8;
/// QRS width multiplier for CD.
pub const CD_QRS_WIDTH_FACTOR: f64 = 2.2;
/// Q-wave depth (fraction of R amplitude) for MI; unaffected beats use `NORMAL_Q_DEPTH`.
pub const MI_Q_DEPTH: f64 = 0.45;
/// ST-segment elevation for STTC as a fraction of R amplitude.
pub const STTC_ST_OFFSET: f64 = 0.15;
/// White measurement noise, millivolts.
pub const NOISE_STD_MV: f64 = 0.04;

const NORMAL_Q_DEPTH: f64 = 0.08;
const P_AMP: f64 = 0.12;
const S_AMP: f64 = 0.25;
const T_AMP: f64 = 0.3;
const RR_RANGE: (f64, f64) = (60.0, 95.0);
const LEAD_GAIN_JITTER: f64 = 0.1;
const WANDER_MAX_MV: f64 = 0.05;
const LEAD_GAINS: [f64; NUM_LEADS] = [
    0.7, 1.0, 0.35, -0.85, 0.3, 0.65, -0.6, 0.4, 0.8, 1.1, 1.0, 0.8,
];

#[derive(Clone, Copy)]
struct Morphology {
    qrs_gain: f64,
    qrs_width: f64,
    q_depth: f64,
    st_offset: f64,
}

impl Morphology {
    fn for_labels(labels: LabelSet) -> Self {
        let qrs_gain = if labels.contains(DiagClass::Hyp) { HYP_QRS_GAIN } else { 1.0 };
        Self {
            qrs_gain,
            qrs_width: if labels.contains(DiagClass::Cd) { CD_QRS_WIDTH_FACTOR } else { 1.0 },
            q_depth: if labels.contains(DiagClass::Mi) { MI_Q_DEPTH } else { NORMAL_Q_DEPTH },
            st_offset: if labels.contains(DiagClass::Sttc) {
                STTC_ST_OFFSET * qrs_gain
            } else {
                0.0
            },
        }
    }

    /// Single-beat waveform at offset `dt` samples from the R peak.
    fn beat(&self, dt: f64) -> f64 {
        let w = self.qrs_width;
        let p = P_AMP * gauss(dt, -16.0, 2.5);
        let q = -self.q_depth * self.qrs_gain * gauss(dt, -2.5 * w, w);
        let r = self.qrs_gain * gauss(dt, 0.0, 1.2 * w);
        let s = -S_AMP * self.qrs_gain * gauss(dt, 2.5 * w, w);
        let st = self.st_offset * logistic(dt - 4.0 * w) * logistic((22.0 - dt) / 2.0);
        let t = T_AMP * gauss(dt, 30.0, 4.5);
        p + q + r + s + st + t
    }
}

#[inline]
fn gauss(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    libm::exp(-0.5 * z * z)
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn draw_labels(rng: &mut ChaCha8Rng, mix: &[f64; NUM_CLASSES]) -> LabelSet {
    let p_norm = mix[DiagClass::Norm.index()];
    if rng.random::<f64>() < p_norm {
        return LabelSet::from_classes(&[DiagClass::Norm]);
    }
    // Conditional rates keep the marginals at `mix` despite NORM exclusivity.
    let mut labels = LabelSet::EMPTY;
    for c in DiagClass::ALL {
        if c == DiagClass::Norm {
            continue;
        }
        let p = (mix[c.index()] / (1.0 - p_norm)).min(1.0);
        if rng.random::<f64>() < p {
            labels.insert(c);
        }
    }
    labels
}

/// Generates `n` records of 1000 × 12 pseudo-ECG.
///
/// Each record is a periodic P-QRS-T train with a random heart rate and phase,
/// per-lead gains, slow baseline wander and white noise. Labels are drawn per
/// class from `class_mix`; a NORM draw excludes the other four classes and the
/// remaining classes use conditional rates `p / (1 - p_norm)` (capped at 1) so
/// the marginal frequencies match `class_mix` whenever that is attainable.
/// Folds cycle 1..=10 so fold 10 holds exactly every tenth record.
pub fn generate_synthetic(n: usize, seed: u64, class_mix: [f64; NUM_CLASSES]) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::InvalidConfig("synthetic corpus size must be at least 1".into()));
    }
    for c in DiagClass::ALL {
        let p = class_mix[c.index()];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability { class: c, value: p });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    let mut template = [0.0f64; SIGNAL_LEN];
    for i in 0..n {
        let labels = draw_labels(&mut rng, &class_mix);
        let morph = Morphology::for_labels(labels);
        let period = rng.random_range(RR_RANGE.0..RR_RANGE.1);
        let phase = rng.random_range(0.0..period);

        for (t, v) in template.iter_mut().enumerate() {
            let t = t as f64;
            let k0 = libm::floor((t - phase) / period);
            *v = (-1..=1)
                .map(|dk| morph.beat(t - (phase + (k0 + f64::from(dk)) * period)))
                .sum();
        }

        let gains: [f64; NUM_LEADS] = core::array::from_fn(|j| {
            let z: f64 = rng.sample(StandardNormal);
            LEAD_GAINS[j] * (1.0 + LEAD_GAIN_JITTER * z)
        });
        let wander_amp = rng.random_range(0.0..WANDER_MAX_MV);
        let wander_freq = rng.random_range(0.05..0.3) / 100.0;
        let wander_phase = rng.random_range(0.0..2.0 * PI);

        let mut signal = Vec::with_capacity(SIGNAL_LEN * NUM_LEADS);
        for (t, &beat) in template.iter().enumerate() {
            let wander = wander_amp * libm::sin(2.0 * PI * wander_freq * t as f64 + wander_phase);
            for gain in gains {
                let noise: f64 = rng.sample(StandardNormal);
                signal.push((gain * beat + wander + NOISE_STD_MV * noise) as f32);
            }
        }

        let fold = (i % usize::from(NUM_FOLDS)) as i64 + 1;
        records.push(EcgRecord::new(format!("syn{:05}", i + 1), signal, labels, fold)?);
    }
    Corpus::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_arguments_reproduce_bit_identical_corpora() {
        let mix = [0.3; 5];
        let a = generate_synthetic(10, 7, mix).unwrap();
        let b = generate_synthetic(10, 7, mix).unwrap();
        assert_eq!(a, b);
        let bits = |c: &Corpus| -> Vec<u32> {
            c.records().iter().flat_map(|r| r.signal().iter().map(|v| v.to_bits())).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let other = generate_synthetic(10, 8, mix).unwrap();
        assert_ne!(bits(&a), bits(&other));
    }

    #[test]
    fn empirical_frequencies_track_the_mix() {
        let mix = [0.3; 5];
        let corpus = generate_synthetic(1000, 1, mix).unwrap();
        let counts = corpus.labels().class_counts();
        for (c, &count) in counts.iter().enumerate() {
            let freq = count as f64 / 1000.0;
            assert!((freq - mix[c]).abs() <= 0.05, "class {c}: {freq}");
        }
    }

    #[test]
    fn norm_is_exclusive() {
        let corpus = generate_synthetic(500, 3, PTBXL_CLASS_MIX).unwrap();
        for r in corpus.records() {
            if r.labels().contains(DiagClass::Norm) {
                assert_eq!(r.labels().len(), 1);
            }
        }
    }

    #[test]
    fn rejects_out_of_range_probability() {
        let err = generate_synthetic(5, 0, [0.1, 1.2, 0.1, 0.1, 0.1]).unwrap_err();
        assert_eq!(err, Error::InvalidProbability { class: DiagClass::Hyp, value: 1.2 });
        let err = generate_synthetic(5, 0, [0.1, 0.1, -0.1, 0.1, 0.1]).unwrap_err();
        assert!(matches!(err, Error::InvalidProbability { class: DiagClass::Mi, .. }));
    }

    #[test]
    fn folds_cycle_through_ten() {
        let corpus = generate_synthetic(25, 0, PTBXL_CLASS_MIX).unwrap();
        let folds: Vec<u8> = corpus.records().iter().map(|r| r.strat_fold()).collect();
        assert_eq!(&folds[..11], &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 1]);
    }

    #[test]
    fn hypertrophy_raises_qrs_amplitude() {
        let normal = Morphology::for_labels(LabelSet::from_classes(&[DiagClass::Norm]));
        let hyp = Morphology::for_labels(LabelSet::from_classes(&[DiagClass::Hyp]));
        assert!((hyp.beat(0.0) / normal.beat(0.0) - HYP_QRS_GAIN).abs() < 0.05);
        let mi = Morphology::for_labels(LabelSet::from_classes(&[DiagClass::Mi]));
        assert!(mi.beat(-2.5) < normal.beat(-2.5) - 0.2);
    }
}
