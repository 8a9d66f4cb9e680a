use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tensor dimensions {0:?}: every dimension must be at least 1")]
    InvalidDims((usize, usize, usize)),

    #[error("{op}: dimension mismatch ({detail})")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("refusing to materialize {entries} entries (cap is {cap})")]
    MaterializationCap { entries: usize, cap: usize },

    #[error("transform matrix is not orthogonal: max |M*M^T - I| = {residual:e}")]
    NotOrthogonal { residual: f64 },

    #[error("tube is singular: transform coefficient {index} has magnitude {magnitude:e}")]
    SingularTube { index: usize, magnitude: f64 },

    #[error("backward called before forward: no cached activations")]
    MissingCache,

    #[error("probability column {column} is degenerate (pre-normalization sum {sum:e})")]
    DegenerateColumn { column: usize, sum: f64 },

    #[error("label {label} out of range 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated file ({detail})")]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("{path}: truncated record ({len} bytes is not a multiple of {record})")]
    TruncatedRecord {
        path: PathBuf,
        len: usize,
        record: usize,
    },

    #[error("image file has {images} items but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn mismatch(op: &'static str, detail: impl Into<String>) -> Self {
        Error::DimensionMismatch {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
