use thiserror::Error;

/// Errors surfaced by the execution engine.
///
/// Non-convergence of the iterative solver is deliberately *not* an error:
/// `HjbSolution::converged` carries that state and the caller decides.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration text does not parse (syntax).
    #[error("parse error: {0}")]
    Parse(String),

    /// Bad configuration: malformed catalog entries, out-of-range parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the mathematical domain of an operation (e.g. z > 0).
    #[error("domain error: {0}")]
    Domain(String),

    /// A numeric computation produced or received non-finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The solvability condition of a bounding ODE is violated.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Caller misuse: mismatched lengths, empty inputs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}
