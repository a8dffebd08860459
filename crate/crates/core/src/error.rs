use thiserror::Error;

/// Errors raised by model construction, inference and I/O.
#[derive(Debug, Error)]
pub enum ApafaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance of unit {unit} is not positive definite")]
    NotPositiveDefinite { unit: usize },

    #[error("numeric failure in {component}: {detail}")]
    NumericFailure { component: String, detail: String },

    #[error("numeric failure at iteration {iteration} in {component}: {detail}")]
    ChainFailure {
        iteration: usize,
        component: String,
        detail: String,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ApafaError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        ApafaError::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(component: &str, detail: impl Into<String>) -> Self {
        ApafaError::NumericFailure {
            component: component.to_string(),
            detail: detail.into(),
        }
    }

    /// True for failures of the numerical kind (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            ApafaError::NotPositiveDefinite { .. }
                | ApafaError::NumericFailure { .. }
                | ApafaError::ChainFailure { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, ApafaError>;
