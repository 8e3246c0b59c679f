use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("split error: not enough {label} patients (need {needed}, have {available})")]
    Split {
        label: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("could not parse model response: {reason}")]
    Parse { reason: String, raw: String },

    #[error("endpoint transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("missing artifact from stage `{stage}`: {path}")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("stale artifact {path}: produced by a different `{stage}` configuration, rerun that stage")]
    StaleArtifact { stage: &'static str, path: PathBuf },

    #[error("I/O error on {path}: {source}")]
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
}
