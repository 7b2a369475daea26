use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// Each variant maps to a stable, machine-parsable code (see [`Error::code`])
/// which the command-line front end prints as a prefix.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("unknown label {label:?}; expected one of: {expected}")]
    Vocabulary { label: String, expected: String },
    #[error("frame index {found} at line {line} does not follow {previous}")]
    Ordering {
        line: usize,
        previous: i64,
        found: i64,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("class {class:?} has {count} samples, fewer than {k_folds} folds")]
    Stratification {
        class: String,
        count: usize,
        k_folds: usize,
    },
    #[error("class {0:?} has no samples")]
    EmptyClass(String),
    #[error("probability vector violates contract: {0}")]
    Contract(String),
    #[error("class {0:?} has a single sample and cannot be interpolated")]
    DegenerateClass(String),
    #[error("training data holds a single class")]
    DegenerateTraining,
    #[error("configuration violates search space: {}", .0.join("; "))]
    SpaceViolation(Vec<String>),
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("empty run: {0}")]
    EmptyRun(String),
    #[error("no configuration completed successfully")]
    NoIncumbent,
    #[error("dataset {dataset_id}: {source}")]
    Dataset {
        dataset_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("search space changed (stored hash {stored}, current {current}); rebuild the artifact")]
    Migration { stored: String, current: String },
    #[error("ensemble member {0} has no matching evaluation record")]
    Provenance(usize),
    #[error("{0}")]
    Config(String),
    #[error("bundle self-check failed: {0}")]
    Bundle(String),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Vocabulary { .. } => "E_VOCABULARY",
            Error::Ordering { .. } => "E_ORDERING",
            Error::InsufficientData(_) => "E_INSUFFICIENT_DATA",
            Error::InvalidDataset(_) => "E_DATASET",
            Error::InvalidWindow(_) => "E_WINDOW",
            Error::InvalidProfile(_) => "E_PROFILE",
            Error::Stratification { .. } => "E_STRATIFICATION",
            Error::EmptyClass(_) => "E_EMPTY_CLASS",
            Error::Contract(_) => "E_CONTRACT",
            Error::DegenerateClass(_) => "E_DEGENERATE_CLASS",
            Error::DegenerateTraining => "E_DEGENERATE_TRAINING",
            Error::SpaceViolation(_) => "E_SPACE_VIOLATION",
            Error::Shape { .. } => "E_SHAPE",
            Error::EmptyRun(_) => "E_EMPTY_RUN",
            Error::NoIncumbent => "E_NO_INCUMBENT",
            Error::Dataset { source, .. } => source.code(),
            Error::EmptyKnowledgeBase => "E_EMPTY_KB",
            Error::Migration { .. } => "E_MIGRATION",
            Error::Provenance(_) => "E_PROVENANCE",
            Error::Config(_) => "E_CONFIG",
            Error::Bundle(_) => "E_BUNDLE",
            Error::Locked(_) => "E_LOCKED",
            Error::Stage { source, .. } => source.code(),
            Error::Io { .. } => "E_IO",
            Error::Serde(_) => "E_SERDE",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<bincode::Error> for Error {
    fn from(e: bincode::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
