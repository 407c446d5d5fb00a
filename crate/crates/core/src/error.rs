use thiserror::Error;

use crate::graph::TypeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown type id {0}")]
    UnknownType(TypeId),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("argument {x} outside the domain [-1, 1]")]
    Domain { x: f64 },

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A theorem precondition does not hold for the supplied parameters.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("not a fixed point: {0}")]
    NotAFixedPoint(String),

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
