use std::path::PathBuf;

/// Everything that can go wrong while loading, clustering or scoring a dataset.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("dimension mismatch at row {row}: expected {expected}, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("profile range not contiguous: missing label(s) {missing:?} in 1..={max}")]
    NonContiguousProfiles { missing: Vec<i64>, max: i64 },

    #[error("invalid profile label {label} at row {row}: labels must be >= 1")]
    InvalidProfile { row: usize, label: i64 },

    #[error("empty dataset")]
    Empty,

    #[error("zero-norm vector at row {row}")]
    ZeroVector { row: usize },

    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },

    #[error("vector is not unit-norm (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset must be unit-normalized for the cosine-derived metric")]
    NotNormalized,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error stems from malformed input rather than from computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_input_error(),
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonContiguousProfiles { .. }
            | Error::InvalidProfile { .. }
            | Error::Empty
            | Error::ZeroVector { .. }
            | Error::NonFinite { .. }
            | Error::InvalidParameter(_)
            | Error::Serialization(_) => true,
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
