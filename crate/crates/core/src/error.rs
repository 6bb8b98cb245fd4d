use alloc::string::String;

use crate::dataset::DiagClass;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("record {record_id}: signal is {time}x{leads}, expected {expected_time}x{expected_leads}")]
    BadSignalShape {
        record_id: String,
        time: usize,
        leads: usize,
        expected_time: usize,
        expected_leads: usize,
    },
    #[error("record {record_id}: strat_fold {fold} outside 1..=10")]
    BadFold { record_id: String, fold: i64 },
    #[error("duplicate record id {0}")]
    DuplicateRecord(String),
    #[error("class probability {value} for {class} is outside [0, 1]")]
    InvalidProbability { class: DiagClass, value: f64 },
    #[error("balance target for {0} must be at least 1")]
    InvalidTarget(DiagClass),
    #[error("class {0} is targeted for resampling but has no members")]
    EmptyClass(DiagClass),
    #[error("class {0} has no positive labels; its weight is undefined")]
    ZeroClassCount(DiagClass),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("validation split is empty")]
    EmptyValidationSet,
    #[error("expected {expected} leads, found {found}")]
    LeadCountMismatch { expected: usize, found: usize },
    #[error("{what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("forward cache does not belong to the current train-mode state")]
    StaleCache,
    #[error("non-finite value in loss input")]
    NonFiniteInput,
    #[error("non-finite loss during epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}
