use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot decode {container} stream: {reason}")]
    Decode {
        container: &'static str,
        reason: String,
    },

    #[error("cannot encode {container} stream: {reason}")]
    Encode {
        container: &'static str,
        reason: String,
    },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported channel layout: {0}")]
    Channel(String),

    #[error("invalid seam: {0}")]
    Seam(String),

    #[error("tensor shape mismatch: {0}")]
    Shape(String),

    #[error("layer state: {0}")]
    State(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("dataset forge failed: {0}")]
    Forge(String),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by caller-supplied parameters or data shape,
    /// as opposed to I/O failures or internal bugs.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Param(_)
                | Error::Dimension(_)
                | Error::Channel(_)
                | Error::Seam(_)
                | Error::Shape(_)
                | Error::Data(_)
                | Error::Degenerate(_)
        )
    }

    /// True for errors that indicate a bug rather than bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_) | Error::State(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
