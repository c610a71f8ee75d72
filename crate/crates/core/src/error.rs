use alloc::string::String;

/// Every failure the core can report.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("{what} index {index} out of range (valid: {valid})")]
    Index {
        what: &'static str,
        index: usize,
        valid: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("rational polynomial denominator vanishes ({value:e})")]
    RpcSingular { value: f64 },

    #[error("localization of pixel ({row}, {col}) failed after {iterations} iterations, residual {residual_px} px")]
    Localization {
        row: f64,
        col: f64,
        iterations: usize,
        residual_px: f64,
    },

    #[error("split cannot be satisfied: {0}")]
    Split(String),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    pub fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }
}
