use thiserror::Error;

#[derive(Debug, Error)]
pub enum DoaError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("degrees of freedom: {0}")]
    DegreesOfFreedom(String),
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl DoaError {
    /// True for errors caused by data that does not fit the requested
    /// configuration (as opposed to bad arguments or numeric breakdown).
    pub fn is_mismatch(&self) -> bool {
        matches!(
            self,
            DoaError::Dimension(_)
                | DoaError::InvalidGeometry(_)
                | DoaError::DegreesOfFreedom(_)
                | DoaError::InvalidLabel(_)
                | DoaError::Format(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, DoaError>;
