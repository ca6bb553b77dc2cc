use thiserror::Error;

use crate::oracle::Orders;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A query asked for derivative orders the oracle does not answer.
    #[error("requested orders {requested:?} but oracle only answers {available:?}")]
    UnavailableOrder { requested: Orders, available: Orders },

    /// The target (or a line restriction of it) is not strongly log-concave and
    /// log-smooth with the declared constants, detected at query point `at`.
    #[error("class violation at x = {at}: {reason}")]
    ClassViolation { at: f64, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: estimate {value} with error estimate {error_estimate}")]
    Quadrature { value: f64, error_estimate: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn class(at: f64, reason: impl Into<String>) -> Self {
        Error::ClassViolation {
            at,
            reason: reason.into(),
        }
    }
}
