use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::region::Region;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),

    #[error("unsupported NIfTI datatype code {0} (expected 2, 4 or 16)")]
    UnsupportedDatatype(i16),

    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },

    #[error("schema violation: {0}")]
    SchemaViolation(String),

    #[error("dimension mismatch: {0}")]
    DimsMismatch(String),

    #[error("resize target must be at least 1 on every axis, got {0:?}")]
    EmptyTarget([usize; 3]),

    #[error("mask manifest is missing region {} ({})", .0.id(), .0.slug())]
    MissingRegion(Region),

    #[error("mask tensor contains a value outside {{0, 1}}: {0}")]
    NotBinary(f32),

    #[error("volume must be normalized to [0, 1] before encoding; found {0}")]
    NotNormalized(f32),

    #[error("token grid {grid:?} is finer than the {height}x{width} slice")]
    GridTooFine {
        grid: (usize, usize),
        height: usize,
        width: usize,
    },

    #[error("feature level shape mismatch: {0}")]
    LevelShapeMismatch(String),

    #[error("unknown feature level {0}")]
    UnknownLevel(u32),

    #[error("pooling factor {factor} does not divide token count {tokens}")]
    NonDivisibleFactor { tokens: usize, factor: usize },

    #[error("channel mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),

    #[error("level mismatch: {0}")]
    LevelMismatch(String),

    #[error("prompt components come from different studies: {0}")]
    StudyMismatch(String),

    #[error("prompt needs {needed} tokens but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },

    #[error("{labels} sentence labels given for {sentences} sentences")]
    LabelCountMismatch { sentences: usize, labels: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for filesystem failures, as opposed to validation failures.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
