use std::path::PathBuf;

use crate::grid::Shape;

pub type Result<T, E = FuseError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum FuseError {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("invalid dimensions for {op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown condition `{0}`")]
    Condition(String),

    #[error("load error in {path} at `{key}`: {msg}")]
    Load { path: PathBuf, key: String, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("step t={t} failed: {source}")]
    Step {
        t: usize,
        #[source]
        source: Box<FuseError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FuseError {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        FuseError::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FuseError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, key: impl Into<String>, msg: impl Into<String>) -> Self {
        FuseError::Load {
            path: path.into(),
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Strips any `Step` wrappers and returns the underlying error.
    pub fn root(&self) -> &FuseError {
        match self {
            FuseError::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
