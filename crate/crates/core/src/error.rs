use thiserror::Error;

/// Errors raised by models, solvers and the Monte Carlo engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("argument {name} = {value} outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("insufficient samples: {got} < {required}")]
    InsufficientSamples { got: usize, required: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("singular profile at z = {z}: W'(z) - W(z) = {denominator:e}")]
    SingularProfile { z: f64, denominator: f64 },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: impl Into<String>) -> Self {
        Error::Domain {
            name,
            value,
            domain: domain.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
