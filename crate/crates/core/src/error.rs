use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed image header: {0}")]
    MalformedHeader(String),
    #[error("wrong channel count: expected {expected}, found {found}")]
    ChannelCount { expected: usize, found: usize },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cost matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("problem size {n} exceeds the limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error("entropic solver did not converge in {iterations} iterations (marginal residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("entropic kernel underflows at epsilon {epsilon:e}")]
    KernelUnderflow { epsilon: f64 },
    #[error("plan kind mismatch: {0}")]
    PlanKind(String),

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("index {index} out of range for {points} points in channel {channel}")]
    IndexOutOfRange { channel: usize, index: u32, points: usize },
    #[error("channel {channel} of the key is not a permutation (index {index} repeats)")]
    NotPermutation { channel: usize, index: u32 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },
    #[error("key does not match the model bridge: {0}")]
    KeyMismatch(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
