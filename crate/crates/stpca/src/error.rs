use thiserror::Error;

/// Errors produced by the ST-PCA library.
#[derive(Debug, Error)]
pub enum StpcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure in {stage}: {detail}")]
    NumericalFailure { stage: String, detail: String },

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl StpcaError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        StpcaError::InvalidArgument(msg.into())
    }

    pub fn numerical(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        StpcaError::NumericalFailure {
            stage: stage.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code for the CLI contract: 2 for input errors, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            StpcaError::NumericalFailure { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, StpcaError>;
