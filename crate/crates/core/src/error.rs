use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::TermId;
use crate::pools::InstanceId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate surface form {0:?}")]
    DuplicateSurface(String),
    #[error("unknown term {0:?}")]
    UnknownTerm(String),
    #[error("term id {0} out of range")]
    InvalidTermId(TermId),
    #[error("invalid refined corpus: {0}")]
    InvalidRefinedCorpus(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("empty labeled set")]
    EmptyLabeledSet,

    #[error("duplicate instance id {0}")]
    DuplicateInstance(InstanceId),
    #[error("instance {id} is not in the {pool} pool")]
    NotInPool { id: InstanceId, pool: &'static str },
    #[error("missing label for instance {0}")]
    MissingLabel(InstanceId),
    #[error("pool audit failed: {0}")]
    PoolAudit(String),

    #[error("invalid config: {0}")]
    Config(String),
    #[error("oracle error: {0}")]
    Oracle(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
