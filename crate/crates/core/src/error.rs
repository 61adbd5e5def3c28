use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("invalid spline knots: {0}")]
    Constraint(String),

    #[error("coordinates ({eta0}, {eta1}) do not give a normalizable density for this model")]
    NonNormalizable { eta0: f64, eta1: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
