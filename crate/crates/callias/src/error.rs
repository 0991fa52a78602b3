use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("index {index} out of range 1..={max}")]
    InvalidIndex { index: usize, max: usize },
    #[error("invalid direction: {0}")]
    InvalidDirection(String),
    #[error("derivative of order {requested} exceeds capability {cap} of {family}")]
    Capability { family: String, requested: usize, cap: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported order: {0}")]
    UnsupportedOrder(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation produced NaN at {0}")]
    Evaluation(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),
    #[error("no right Lebesgue point: {0}")]
    NoLebesguePoint(String),
    #[error("no limit: {0}")]
    NoLimit(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
