//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input (bad shape, unparseable shorthand, inconsistent lengths).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Exact enumeration would exceed the configured budget.
    #[error("capacity exceeded: {what} needs {needed} but the budget is {budget}")]
    Capacity {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    /// A lattice body holds more integer points than its class allows.
    #[error("class membership violated: body holds {count} lattice points, cap is {cap}")]
    ClassCap { count: usize, cap: usize },

    /// Numerical procedure failed to reach its tolerance.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
