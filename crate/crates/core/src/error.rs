use thiserror::Error;

/// Errors raised by the model, generators and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid configuration (rates, death profile, tree shape, stop rule...).
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An operation was asked to act on a state it is not defined for.
    #[error("domain error: {0}")]
    Domain(String),
    /// A closed-form bound whose hypothesis or denominator fails.
    #[error("assumption not satisfied: {0}")]
    AssumptionNotSatisfied(String),
    /// Graph too large for an exhaustive enumeration.
    #[error("guard: {0}")]
    Guard(String),
    /// Malformed edge-list or infection input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// An internal invariant did not hold. Indicates a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
