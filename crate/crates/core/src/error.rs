use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("outcome enumeration over horizon {horizon} exceeds the cap of {cap}")]
    EnumerationCap { horizon: usize, cap: usize },

    #[error("{0} unavailable")]
    Unavailable(&'static str),

    #[error("out-of-order episode: expected customer {expected}, got {got}")]
    OutOfOrder { expected: usize, got: usize },

    #[error("estimator provenance violated: {0}")]
    Provenance(String),

    #[error("schema error at line {line}: {message}")]
    Schema { line: u64, message: String },

    #[error("trial {trial}, customer {customer}: {source}")]
    Trial {
        trial: usize,
        customer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
