use thiserror::Error;

/// Errors raised by tensor operations, pattern builders, and kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("query row {row} attends no keys")]
    EmptyRow { row: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity too small: {0}")]
    Capacity(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Shape {
        op,
        detail: detail.into(),
    }
}

pub(crate) fn param_err(detail: impl Into<String>) -> Error {
    Error::Parameter(detail.into())
}
