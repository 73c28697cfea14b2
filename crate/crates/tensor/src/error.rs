use thiserror::Error;

/// Errors raised by tensor construction, graph operations, optimizers and checkpoints.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument to {op}: {detail}")]
    Argument { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("state error: {0}")]
    State(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("checkpoint format error at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TensorError {
    fn from(e: std::io::Error) -> Self {
        TensorError::Io(e.to_string())
    }
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape {
        op,
        detail: detail.into(),
    })
}
