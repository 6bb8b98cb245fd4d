//! ECG records, multi-hot diagnosis labels and corpora.

mod synthetic;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SignalBatch;

pub use synthetic::{
    generate_synthetic, PTBXL_CLASS_MIX, CD_QRS_WIDTH_FACTOR, HYP_QRS_GAIN, MI_Q_DEPTH,
    NOISE_STD_MV, STTC_ST_OFFSET,
};

pub const NUM_CLASSES: usize = 5;
pub const SIGNAL_LEN: usize = 1000;
pub const NUM_LEADS: usize = 12;
pub const NUM_FOLDS: u8 = 10;

pub const LEAD_NAMES: [&str; NUM_LEADS] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// Diagnostic superclass. Discriminants are the canonical column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagClass {
    #[serde(rename = "CD")]
    Cd = 0,
    #[serde(rename = "HYP")]
    Hyp = 1,
    #[serde(rename = "MI")]
    Mi = 2,
    #[serde(rename = "NORM")]
    Norm = 3,
    #[serde(rename = "STTC")]
    Sttc = 4,
}

impl DiagClass {
    pub const ALL: [DiagClass; NUM_CLASSES] = [
        DiagClass::Cd,
        DiagClass::Hyp,
        DiagClass::Mi,
        DiagClass::Norm,
        DiagClass::Sttc,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiagClass::Cd => "CD",
            DiagClass::Hyp => "HYP",
            DiagClass::Mi => "MI",
            DiagClass::Norm => "NORM",
            DiagClass::Sttc => "STTC",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for DiagClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multi-hot label vector packed into the low five bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn from_classes(classes: &[DiagClass]) -> Self {
        let mut set = Self::EMPTY;
        for &c in classes {
            set.insert(c);
        }
        set
    }

    /// Builds from a 0/1 vector in canonical order; any non-zero entry counts as positive.
    pub fn from_multi_hot(bits: &[u8; NUM_CLASSES]) -> Self {
        let mut set = Self::EMPTY;
        for c in DiagClass::ALL {
            if bits[c.index()] != 0 {
                set.insert(c);
            }
        }
        set
    }

    #[inline]
    pub fn contains(self, class: DiagClass) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    #[inline]
    pub fn insert(&mut self, class: DiagClass) {
        self.0 |= 1 << class.index();
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = DiagClass> {
        DiagClass::ALL.into_iter().filter(move |&c| self.contains(c))
    }

    pub fn to_multi_hot(self) -> [u8; NUM_CLASSES] {
        let mut out = [0u8; NUM_CLASSES];
        for c in self.iter() {
            out[c.index()] = 1;
        }
        out
    }

    pub fn to_targets(self) -> [f64; NUM_CLASSES] {
        self.to_multi_hot().map(f64::from)
    }
}

/// `samples × 5` multi-hot matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: Vec<LabelSet>,
}

impl LabelMatrix {
    pub fn new(rows: Vec<LabelSet>) -> Self {
        Self { rows }
    }

    /// From a row-major `n × 5` buffer of 0/1 values.
    pub fn from_dense(bits: &[u8]) -> Result<Self> {
        if !bits.len().is_multiple_of(NUM_CLASSES) {
            return Err(Error::ShapeMismatch {
                what: "label buffer length (multiple of 5)",
                expected: bits.len() / NUM_CLASSES * NUM_CLASSES,
                found: bits.len(),
            });
        }
        let rows = bits
            .chunks_exact(NUM_CLASSES)
            .map(|chunk| {
                let mut row = [0u8; NUM_CLASSES];
                row.copy_from_slice(chunk);
                LabelSet::from_multi_hot(&row)
            })
            .collect();
        Ok(Self { rows })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    #[inline]
    pub fn row(&self, index: usize) -> LabelSet {
        self.rows[index]
    }

    pub fn rows(&self) -> &[LabelSet] {
        &self.rows
    }

    pub fn select(&self, indices: &[usize]) -> LabelMatrix {
        LabelMatrix {
            rows: indices.iter().map(|&i| self.rows[i]).collect(),
        }
    }

    /// Per-class positive counts in canonical order.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for row in &self.rows {
            for c in row.iter() {
                counts[c.index()] += 1;
            }
        }
        counts
    }

    /// Row-major `n × 5` targets as 0.0 / 1.0.
    pub fn to_dense(&self) -> Vec<f64> {
        self.rows.iter().flat_map(|r| r.to_targets()).collect()
    }
}

impl FromIterator<LabelSet> for LabelMatrix {
    fn from_iter<I: IntoIterator<Item = LabelSet>>(iter: I) -> Self {
        Self {
            rows: iter.into_iter().collect(),
        }
    }
}

/// One recording: 1000 time steps × 12 leads of raw millivolt values, time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgRecord {
    record_id: String,
    signal: Vec<f32>,
    labels: LabelSet,
    strat_fold: u8,
}

impl EcgRecord {
    pub fn new(
        record_id: impl Into<String>,
        signal: Vec<f32>,
        labels: LabelSet,
        strat_fold: i64,
    ) -> Result<Self> {
        let record_id = record_id.into();
        if signal.len() != SIGNAL_LEN * NUM_LEADS {
            return Err(Error::BadSignalShape {
                time: signal.len() / NUM_LEADS,
                leads: if signal.len().is_multiple_of(NUM_LEADS) { NUM_LEADS } else { 1 },
                record_id,
                expected_time: SIGNAL_LEN,
                expected_leads: NUM_LEADS,
            });
        }
        if !(1..=i64::from(NUM_FOLDS)).contains(&strat_fold) {
            return Err(Error::BadFold {
                record_id,
                fold: strat_fold,
            });
        }
        Ok(Self {
            record_id,
            signal,
            labels,
            strat_fold: strat_fold as u8,
        })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn signal(&self) -> &[f32] {
        &self.signal
    }

    pub fn labels(&self) -> LabelSet {
        self.labels
    }

    pub fn strat_fold(&self) -> u8 {
        self.strat_fold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    records: Vec<EcgRecord>,
    lead_names: Vec<String>,
}

impl Corpus {
    pub fn new(records: Vec<EcgRecord>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &records {
            if !seen.insert(r.record_id.as_str()) {
                return Err(Error::DuplicateRecord(r.record_id.clone()));
            }
        }
        Ok(Self {
            records,
            lead_names: LEAD_NAMES.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn empty() -> Self {
        Self {
            records: Vec::new(),
            lead_names: LEAD_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn records(&self) -> &[EcgRecord] {
        &self.records
    }

    pub fn lead_names(&self) -> &[String] {
        &self.lead_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> LabelMatrix {
        self.records.iter().map(|r| r.labels).collect()
    }

    /// Raw signals of the listed rows as a 64-bit batch.
    pub fn signals(&self, rows: &[usize]) -> SignalBatch {
        let mut batch = SignalBatch::zeros(rows.len(), SIGNAL_LEN, NUM_LEADS);
        for (dst, &src) in rows.iter().enumerate() {
            for (o, &v) in batch
                .sample_mut(dst)
                .iter_mut()
                .zip(self.records[src].signal.iter())
            {
                *o = f64::from(v);
            }
        }
        batch
    }
}

/// Per-class positive-label counts; the sum may exceed the record count.
pub fn class_counts(corpus: &Corpus) -> [usize; NUM_CLASSES] {
    corpus.labels().class_counts()
}
