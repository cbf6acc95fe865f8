use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid record {id}: {message}")]
    Record { id: String, message: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("bigram curve undefined: reference has fewer than 2 tokens")]
    UndefinedCurve,
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
