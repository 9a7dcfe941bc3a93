use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of failures, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed recording {path}: expected {expected} values, found {found}")]
    MalformedRecording {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: cannot parse {token:?} as a number")]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
    },
    #[error("channel {channel} is degenerate (zero variance or range)")]
    DegenerateChannel { channel: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("depth error: {0}")]
    Depth(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("aliasing: f_max {f_max} Hz exceeds the Nyquist frequency {nyquist} Hz")]
    Aliasing { f_max: f64, nyquist: f64 },
    #[error("shape mismatch at {layer}: {detail}")]
    Shape { layer: String, detail: String },
    #[error("state error: {0}")]
    State(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),
    #[error("undefined AUC: {0}")]
    UndefinedAuc(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty data: {0}")]
    Empty(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Aliasing { .. } => ErrorKind::Config,
            Error::Divergence { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
