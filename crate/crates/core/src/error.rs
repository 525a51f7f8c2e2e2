use std::path::PathBuf;

/// Errors produced by the library and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("regularized degree L[{index}] = {value} is not positive; use lambda > 0")]
    SingularDegree { index: usize, value: f64 },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("QVE fixed point did not converge within {iterations} iterations at z = {z}")]
    OutsideDomain { z: String, iterations: usize },

    #[error("no valid limit t_{k}: {reason}")]
    NoValidLimit { k: usize, reason: String },

    #[error("degenerate eigengap: t_{k} coincides with delta_{l}")]
    DegenerateGap { k: usize, l: usize },

    #[error("bias refinement degenerate for k = {k}: {reason}")]
    RefinementDegenerate { k: usize, reason: String },

    #[error("degenerate variance: scale {0} is not positive")]
    DegenerateVariance(f64),

    #[error("degenerate KDE bandwidth: all samples identical")]
    DegenerateBandwidth,

    #[error("{failed} of {total} replications failed (limit 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("malformed matrix file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 for invalid configuration or
    /// input, 3 for numeric failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec(_)
            | Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::Format { .. }
            | Error::Json(_) => 2,
            Error::Io { .. } | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
