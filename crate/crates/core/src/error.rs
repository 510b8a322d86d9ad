use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph has {vertices} vertices, oracle supports at most {cap}")]
    OracleTooLarge { vertices: usize, cap: usize },

    #[error("invalid attention map: {0}")]
    InvalidMap(String),

    #[error("invalid threshold schedule: {0}")]
    InvalidSchedule(String),

    #[error("threshold {0} is outside the open interval (0, 1)")]
    ThresholdOutOfRange(f64),

    #[error("betti curve is not monotone: {0}")]
    NonMonotoneCurve(String),

    #[error("head {layer}.{head} is outside a tensor of {layers} layers x {heads} heads")]
    HeadOutOfRange {
        layer: usize,
        head: usize,
        layers: usize,
        heads: usize,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training set contains a single class ({0})")]
    SingleClass(u8),

    #[error("label {0} is not binary")]
    InvalidLabel(String),

    #[error("sample/label mismatch: {0}")]
    LabelMismatch(String),

    #[error("cannot compute accuracy of an empty confusion matrix")]
    EmptyConfusion,

    #[error("{path}: bad magic {found:?}, expected \"ATNG\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("{path}: truncated payload, expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: trailing data, expected {expected} payload bytes, found {actual}")]
    TrailingData {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    #[error("{path}: layer {layer} head {head} row {row} sums to {sum}, outside tolerance {tolerance}")]
    RowSum {
        path: PathBuf,
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
        tolerance: f64,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Config(String),
}

impl Error {
    /// Stable short identifier, used as the machine-readable error kind on the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid-graph",
            Error::OracleTooLarge { .. } => "oracle-too-large",
            Error::InvalidMap(_) => "invalid-map",
            Error::InvalidSchedule(_) => "invalid-schedule",
            Error::ThresholdOutOfRange(_) => "threshold-out-of-range",
            Error::NonMonotoneCurve(_) => "non-monotone-curve",
            Error::HeadOutOfRange { .. } => "head-out-of-range",
            Error::InvalidTensor(_) => "invalid-tensor",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::SingleClass(_) => "single-class",
            Error::InvalidLabel(_) => "invalid-label",
            Error::LabelMismatch(_) => "label-mismatch",
            Error::EmptyConfusion => "empty-confusion",
            Error::BadMagic { .. } => "bad-magic",
            Error::UnsupportedVersion { .. } => "unsupported-version",
            Error::Truncated { .. } => "truncated",
            Error::TrailingData { .. } => "trailing-data",
            Error::RowSum { .. } => "row-sum",
            Error::Format { .. } => "format",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
