//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value is outside its mathematical domain (e.g. negative distance).
    #[error("domain error: {0}")]
    Domain(String),

    /// A call-site contract was violated (mismatched lengths, bad preconditions).
    #[error("contract error: {0}")]
    Contract(String),

    /// The inputs are formally valid but degenerate for the requested operation
    /// (all-zero channel, zero gradient, zero signal).
    #[error("signal error: {0}")]
    Signal(String),

    /// A numerical routine failed (singular matrix, factorization breakdown).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A conic solver reported infeasibility, unboundedness or another failure.
    #[error("solver error: {0}")]
    Solver(String),

    /// Invalid configuration file or CLI arguments.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
