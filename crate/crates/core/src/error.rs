use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("duplicate index {index} in index set")]
    DuplicateIndex { index: usize },

    #[error("index {index} out of range for ambient dimension {ambient_dim}")]
    IndexOutOfRange { index: usize, ambient_dim: usize },

    /// Frame does not cover every coordinate. Indices are 1-based.
    #[error("fusion frame does not cover indices {uncovered:?}")]
    UncoveredIndices { uncovered: Vec<usize> },

    #[error("zero column: least squares on a vanishing column is undefined")]
    ZeroColumn,

    #[error("rank-deficient submatrix (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("no feasible support of size at most {s_max}")]
    NoFeasibleSupport { s_max: usize },

    #[error("problem infeasible: best attainable residual {residual:.3e} exceeds eta = {eta:.3e}")]
    Infeasible { residual: f64, eta: f64 },

    #[error("exhaustive enumeration of {supports} supports exceeds the cap of {cap}; use the Monte Carlo estimator")]
    EnumerationCap { supports: u128, cap: u128 },

    #[error("RIP constant {delta} is outside [0, 4/sqrt(41))")]
    DeltaOutOfRange { delta: f64 },

    #[error("NSP constant rho = {rho} must lie in [0, 1)")]
    RhoOutOfRange { rho: f64 },

    #[error("subspace {index}: {source}")]
    Subspace {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_subspace(self, index: usize) -> Error {
        Error::Subspace {
            index,
            source: Box::new(self),
        }
    }
}
