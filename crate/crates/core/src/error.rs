use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: image error: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    /// A bundle, config or asset file parsed but violates an invariant.
    #[error("{path}: field `{field}`: {message}")]
    Invalid {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("OBJ line {line}: {message}")]
    Obj { line: usize, message: String },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("non-rigid transform: {0}")]
    NonRigid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    Domain(String),

    #[error("no feasible placement after {draws} draws (most frequent rejection: {reason})")]
    NoFeasiblePlacement { draws: usize, reason: String },

    #[error("missing scene depth for camera `{camera}` frame {frame} and flat-ground fallback disabled")]
    MissingDepth { camera: String, frame: usize },

    #[error("non-finite sampler state at step {step}")]
    NonFinite { step: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(
        path: impl Into<PathBuf>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Invalid {
            path: path.into(),
            field: field.into(),
            message: message.into(),
        }
    }
}
