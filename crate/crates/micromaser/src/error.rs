use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library and the command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation: tail mass {tail:.3e} beyond n_max={n_max} exceeds 1e-8")]
    Truncation { tail: f64, n_max: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("state is not stationary (residual {residual:.3e})")]
    NotStationary { residual: f64 },

    #[error("kernel dimension {found}, expected {expected}")]
    KernelDimension { expected: usize, found: usize },

    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("divergent stationary distribution: {0}")]
    Divergence(String),

    #[error("coherence |c|^2={c2} exceeds p(1-p)={bound}")]
    InvalidCoherence { c2: f64, bound: f64 },

    #[error("invalid mode partition: {0}")]
    Partition(String),

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Validation { .. } | Error::InvalidArgument(_) | Error::Io { .. } => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
