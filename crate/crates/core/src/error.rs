use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth {0}: must be finite and > 0")]
    InvalidDepth(f64),

    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    OutOfBounds {
        u: usize,
        v: usize,
        width: usize,
        height: usize,
    },

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("depth {0} m cannot be encoded as a 16-bit depth code")]
    DepthRange(f64),

    #[error("malformed depth image {path}: {reason}")]
    DepthFormat { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no ground truth under valid point at ({u}, {v})")]
    MissingTruth { u: usize, v: usize },

    #[error("no valid prediction at ({u}, {v})")]
    MissingPrediction { u: usize, v: usize },

    #[error("no points to evaluate")]
    EmptyEvaluation,

    #[error("stage `{stage}` failed for scene {scene}: {source}")]
    Stage {
        stage: &'static str,
        scene: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str, scene: usize) -> Self {
        Error::Stage {
            stage,
            scene,
            source: Box::new(self),
        }
    }
}
