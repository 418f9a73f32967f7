use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("no data rows")]
    NoDataRows,

    #[error("no tickers survive the missing-data policy")]
    NoTickers,

    #[error("non-positive price {value} for {ticker} on {date}")]
    NonPositivePrice {
        ticker: String,
        date: String,
        value: f64,
    },

    #[error("unparseable numeric cell {cell:?} for {column} on row {row}")]
    BadNumber {
        column: String,
        row: usize,
        cell: String,
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("series too short: need at least {needed} observations, have {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("zero variance in series {ticker}")]
    ZeroVariance { ticker: String },

    #[error("correlation {0} outside [-1, 1]")]
    CorrelationOutOfRange(f64),

    #[error("network needs at least {needed} nodes, has {actual}")]
    TooFewNodes { needed: usize, actual: usize },

    #[error("negative edge weight {weight} between nodes {i} and {j}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("integration step too large: dt * rate = {product:.4} (must be < 0.5)")]
    StabilityGuard { product: f64 },

    #[error("non-finite phase at step {step}")]
    NonFinitePhase { step: usize },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("design matrix is rank deficient at column {column}")]
    RankDeficient { column: String },

    #[error("all robustness weights are zero")]
    AllWeightsZero,

    #[error("insufficient samples: need at least {needed}, have {actual}")]
    InsufficientSamples { needed: usize, actual: usize },

    #[error("window {window} missing from {source_name}")]
    MissingWindow {
        window: usize,
        source_name: &'static str,
    },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("invalid regime schedule: {0}")]
    Schedule(String),

    #[error("window {window}: {source}")]
    InWindow {
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_window(self, window: usize) -> Self {
        Error::InWindow {
            window,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::StabilityGuard { .. }
            | Error::NonFinitePhase { .. }
            | Error::RankDeficient { .. }
            | Error::AllWeightsZero => ErrorKind::Numerical,
            Error::InWindow { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
