use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("zero variance over valid samples")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular transform (determinant {0:e})")]
    SingularMatrix(f64),

    #[error("no valid samples: {0}")]
    EmptySupport(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("polar grid mismatch: {0}x{1} vs {2}x{3}")]
    GridMismatch(usize, usize, usize, usize),

    #[error("degenerate overlap at shift {shift}: {reason}")]
    DegenerateOverlap { shift: usize, reason: String },

    #[error("degenerate crop pair ({0}, {1}): {2}")]
    DegeneratePair(usize, usize, String),

    #[error("pruned search requires fully valid polar grids")]
    InvalidSamples,

    #[error("correlation {0} outside [-1, 1] beyond rounding")]
    CorrelationOutOfRange(f64),

    #[error("index {index} out of range for {n} images")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("immediate repeat of frame {0} at position {1}")]
    ImmediateRepeat(usize, usize),

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
