use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid pair: agent {0} paired with itself")]
    InvalidPair(i64),

    #[error("invalid angle: {0} is not finite")]
    InvalidAngle(f64),

    #[error("ingest failed: {bad_rows} malformed rows exceed the limit of {limit} (lines {lines:?})")]
    IngestFailure {
        bad_rows: usize,
        limit: usize,
        lines: Vec<usize>,
    },

    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("malformed group row at line {line}: {reason}")]
    MalformedGroupRow { line: usize, reason: String },

    #[error("invalid bin width {0} ms (must be positive)")]
    InvalidBinWidth(i64),

    #[error("invalid sequence length {0} (must be greater than 1)")]
    InvalidSequenceLength(usize),

    #[error("insufficient negatives: needed {needed} singleton pairs, {available} available")]
    InsufficientNegatives { needed: usize, available: usize },

    #[error("cannot interpolate: need at least 2 positive samples, found {0}")]
    CannotInterpolate(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cannot fit scalers on an empty training set")]
    CannotFit,

    #[error("numerical failure in {layer}")]
    NumericalFailure { layer: String },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration mismatch: model expects sequence length {model}, scene has {scene}")]
    ConfigMismatch { model: usize, scene: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by numeric breakdown rather than bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. } | Error::TrainingDiverged { .. }
        )
    }
}
