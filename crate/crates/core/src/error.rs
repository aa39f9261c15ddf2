use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("degenerate statistic: {0}")]
    DegenerateStatistic(String),
    #[error("out of domain: {0}")]
    OutOfDomain(String),
    #[error("out of validity: {0}")]
    OutOfValidity(String),
    #[error("divergent mgf: {0}")]
    DivergentMgf(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidParameter(msg.into())
}
