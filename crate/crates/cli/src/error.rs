use std::path::{Path, PathBuf};

use ecg_cvae_core::Error as CoreError;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}: column `{column}`: {detail}", path.display())]
    SchemaMismatch { path: PathBuf, column: String, detail: String },

    #[error("{}: {detail}", path.display())]
    MalformedInput { path: PathBuf, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingFile { path: path.to_path_buf() }
        } else {
            CliError::Io { path: path.to_path_buf(), source }
        }
    }

    pub fn malformed(path: &Path, detail: impl std::fmt::Display) -> Self {
        CliError::MalformedInput {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::MissingFile { .. } => "MissingFile",
            CliError::SchemaMismatch { .. } => "SchemaMismatch",
            CliError::MalformedInput { .. } => "MalformedInput",
            CliError::Io { .. } => "Io",
            CliError::CheckpointMismatch(_) => "CheckpointMismatch",
            CliError::Config(_) => "InvalidConfig",
            CliError::Core(e) => core_kind(e),
        }
    }

    /// Process exit status; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Core(CoreError::InvalidConfig(_)) => 3,
            CliError::MissingFile { .. } => 4,
            CliError::SchemaMismatch { .. } | CliError::MalformedInput { .. } => 5,
            CliError::Core(
                CoreError::BadSignalShape { .. } | CoreError::BadFold { .. } | CoreError::DuplicateRecord(_),
            ) => 6,
            CliError::CheckpointMismatch(_) | CliError::Core(CoreError::CorruptCheckpoint(_)) => 7,
            CliError::Core(CoreError::NonFiniteLoss { .. } | CoreError::NonFiniteInput) => 8,
            CliError::Io { .. } => 9,
            CliError::Core(_) => 10,
        }
    }

    /// Machine-readable form printed to stderr.
    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        let extra = match self {
            CliError::MissingFile { path } | CliError::MalformedInput { path, .. } | CliError::Io { path, .. } => {
                json!({ "path": path })
            }
            CliError::SchemaMismatch { path, column, .. } => json!({ "path": path, "column": column }),
            CliError::Core(CoreError::NonFiniteLoss { epoch }) => json!({ "epoch": epoch }),
            CliError::Core(CoreError::BadSignalShape { record_id, .. } | CoreError::BadFold { record_id, .. }) => {
                json!({ "record_id": record_id })
            }
            _ => json!({}),
        };
        if let (Some(obj), Some(more)) = (v.as_object_mut(), extra.as_object()) {
            obj.extend(more.clone());
        }
        v
    }
}

fn core_kind(e: &CoreError) -> &'static str {
    match e {
        CoreError::BadSignalShape { .. } => "BadSignalShape",
        CoreError::BadFold { .. } => "BadFold",
        CoreError::DuplicateRecord(_) => "DuplicateRecord",
        CoreError::InvalidProbability { .. } => "InvalidProbability",
        CoreError::InvalidTarget(_) => "InvalidTarget",
        CoreError::EmptyClass(_) => "EmptyClass",
        CoreError::ZeroClassCount(_) => "ZeroClassCount",
        CoreError::EmptyTrainingSet => "EmptyTrainingSet",
        CoreError::EmptyValidationSet => "EmptyValidationSet",
        CoreError::LeadCountMismatch { .. } => "LeadCountMismatch",
        CoreError::ShapeMismatch { .. } => "ShapeMismatch",
        CoreError::InvalidConfig(_) => "InvalidConfig",
        CoreError::StaleCache => "StaleCache",
        CoreError::NonFiniteInput => "NonFiniteInput",
        CoreError::NonFiniteLoss { .. } => "NonFiniteLoss",
        CoreError::CorruptCheckpoint(_) => "CorruptCheckpoint",
    }
}
