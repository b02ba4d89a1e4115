//! Error type shared by every stage of the pipeline.
//!
//! The variants map one-to-one onto the CLI exit codes: input problems exit
//! with 2, unsupported (nonhomogeneous or nonlinear) constraints with 3 and
//! numerical non-convergence with 4.

use thiserror::Error;

/// Pipeline error.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input text (JSON syntax, number syntax).
    #[error("parse error: {0}")]
    Parse(String),
    /// Input that parses but violates the netlist schema or element invariants.
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    /// Structural problem with the circuit graph.
    #[error("topology error: {0}")]
    Topology(String),
    /// Constraint system that the linear reduction cannot handle.
    #[error("nonhomogeneous constraint: {0}")]
    Nonhomogeneous(String),
    /// A numerical routine failed to converge or hit a singular point.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Filesystem errors in the CLI layer.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Convenience constructor for schema violations.
    pub fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { location: location.into(), message: message.into() }
    }

    /// Process exit code associated with this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Schema { .. } | Error::Topology(_) | Error::Io(_) => 2,
            Error::Nonhomogeneous(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
