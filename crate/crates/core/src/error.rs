use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument {x} outside the supported range [.., {x_max}]")]
    OutOfRange { x: f64, x_max: f64 },

    #[error("Laplace inversion missed its accuracy target at x = {x} (estimated error {error:e})")]
    InversionFailed { x: f64, error: f64 },

    #[error("scale function grid violates `{invariant}` at x = {x}")]
    GridInvariant { invariant: &'static str, x: f64 },

    #[error("value {value} is not a probability (tolerance {slack:e}) in {context}")]
    NotAProbability {
        value: f64,
        slack: f64,
        context: &'static str,
    },

    #[error(
        "insufficient conditional sample in bin {bin}: {count} paths, need at least {required}"
    )]
    InsufficientSample {
        bin: String,
        count: usize,
        required: usize,
    },

    #[error("empty sample")]
    EmptySample,

    #[error("worker pool: {0}")]
    WorkerPool(String),

    #[error("invalid experiment spec: {0}")]
    Spec(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
