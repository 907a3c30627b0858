use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (skew residual {0:.3e})")]
    NotHermitian(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("level element is inconsistent (residual {0:.3e})")]
    InconsistentElement(f64),
    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),
    #[error("not positive: {0}")]
    NotPositive(String),
    #[error("no witness available: {0}")]
    WitnessUnavailable(String),
    #[error("measure has empty support")]
    EmptySupport,
    #[error("kernel is positive semi-definite; nothing to refute")]
    KernelIsPositive,
    #[error("invalid balanced context: {0}")]
    InvalidContext(String),
    #[error("module condition fails: {0}")]
    ModuleConditionFailed(String),
    #[error("bad parameter range: {0}")]
    BadRange(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid operator space: {0}")]
    InvalidSpace(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
