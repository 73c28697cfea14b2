use ran_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RanError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("state error: {0}")]
    State(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RanError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        RanError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by the filesystem or a malformed file.
    pub fn is_io_or_format(&self) -> bool {
        matches!(
            self,
            RanError::Io { .. }
                | RanError::Format(_)
                | RanError::Unsupported(_)
                | RanError::Csv(_)
                | RanError::Tensor(TensorError::Format { .. } | TensorError::Io(_))
        )
    }
}

pub type Result<T, E = RanError> = std::result::Result<T, E>;
