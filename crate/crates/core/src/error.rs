use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Input data violates a model requirement.
    #[error("data error: {0}")]
    Data(String),
    #[error("level lies below the threshold of regime {regime}; use the bulk quantile (mix_quantile) instead")]
    BelowThreshold { regime: usize },
    #[error("infinite mean tail in regime {regime} (xi = {xi})")]
    InfiniteMeanTail { regime: usize, xi: f64 },
    #[error("non-finite pointwise log-density variance at observation {index}")]
    NonFinitePointwise { index: usize },
    #[error("{dropped} of {total} samples violate the preconditions at level {level}")]
    TooManyDropped { dropped: usize, total: usize, level: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
