use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate regression design in window [{start}, {end})")]
    DegenerateDesign { start: usize, end: usize },

    #[error("series has {len} samples, at least {min} required")]
    SeriesTooShort { len: usize, min: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty training batch")]
    EmptyBatch,

    #[error("non-finite loss at epoch {epoch}, batch {batch} (last finite loss {last_loss})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        last_loss: f64,
    },

    #[error("LP solver stalled after {iterations} pivots")]
    SolverStall { iterations: usize },

    #[error("invalid input region: {0}")]
    InvalidRegion(String),

    #[error("perturbed instance {instance}: {source}")]
    Instance {
        instance: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("stratum {name} has {have} eligible series, {need} required")]
    Stratum {
        name: String,
        have: usize,
        need: usize,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    /// Short machine-readable tag used by the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateDesign { .. } => "degenerate-design",
            Error::SeriesTooShort { .. } => "series-too-short",
            Error::InvalidConfig(_) => "invalid-config",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::EmptyBatch => "empty-batch",
            Error::NonFiniteLoss { .. } => "non-finite-loss",
            Error::SolverStall { .. } => "solver-stall",
            Error::InvalidRegion(_) => "invalid-region",
            Error::Instance { source, .. } => source.kind(),
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Stratum { .. } => "stratum",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
