use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// A split was evaluated with one side holding no points.
    #[error("empty subcluster")]
    EmptySubcluster,

    /// Every point in the cluster is identical, so no two-way partition exists.
    #[error("degenerate cluster: all points identical")]
    DegenerateCluster,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("bad magic bytes in weight file")]
    BadMagic,

    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("corrupt tensor data: {0}")]
    CorruptTensor(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("no splittable pair after {attempts} attempts")]
    UnsplittablePrior { attempts: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Prefixes numerical failures with extra context, leaving other variants untouched.
    pub(crate) fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            Error::NumericalFailure(msg) => Error::NumericalFailure(format!("{what}: {msg}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
