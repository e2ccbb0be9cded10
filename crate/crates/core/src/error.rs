use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: u64,
        reason: String,
    },

    #[error("{0}: no in-domain trajectory rows")]
    EmptyDataset(PathBuf),

    #[error("matrix has no observed cells")]
    EmptyObservation,

    #[error("evaluation set is empty: ground truth has no observed cells")]
    EmptyEvaluation,

    #[error("not enough eligible cells for {kind}: requested {requested}, available {available} (short by {})", requested - available)]
    Capacity {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("numerical failure{}: {reason}", iteration.map(|i| format!(" at iteration {i}")).unwrap_or_default())]
    Numerical {
        iteration: Option<usize>,
        reason: String,
    },

    #[error("scenario `{scenario}` (seeds {seeds}): {source}")]
    Scenario {
        scenario: String,
        seeds: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
