use thiserror::Error;

pub type Result<T> = std::result::Result<T, IsccError>;

#[derive(Debug, Error)]
pub enum IsccError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The sensing threshold cannot be met for this scenario.
    #[error("Gamma_th infeasible for this scenario: {0}")]
    SensingInfeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl IsccError {
    pub(crate) fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        IsccError::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}
