use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Configuration rejected before any simulation work.
    #[error("invalid configuration: {field}: {message}")]
    Validation { field: String, message: String },

    /// Trace could not be parsed or is out of order; `line` is 1-based.
    #[error("trace record {line}: {message}")]
    Trace { line: usize, message: String },

    /// Oracle refused a configuration outside its bounds.
    #[error("oracle refused configuration: {0}")]
    OracleRefused(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    pub fn contract(msg: impl Into<String>) -> Self {
        SimError::Contract(msg.into())
    }

    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Validation { field: field.into(), message: message.into() }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, SimError::Validation { .. })
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
