use thiserror::Error;

use maepose_tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("corrupt container: {0}")]
    Corrupt(String),

    #[error("range/velocity aliasing: {0}")]
    Aliasing(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            Error::Numeric(_) | Error::DegenerateSample(_) => 4,
            Error::Tensor(TensorError::Dimension(_)) => 2,
            _ => 3,
        }
    }

    /// Short machine-readable category name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Corrupt(_) => "corrupt_container",
            Error::Aliasing(_) => "aliasing",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::Numeric(_) => "numeric",
            Error::Tensor(_) => "tensor",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
