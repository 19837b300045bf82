//! Error type shared across the crate, with CLI exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad parameter values, malformed config text).
    #[error("config error: {0}")]
    Config(String),
    /// API contract violation, e.g. mismatched array lengths.
    #[error("contract violation: {0}")]
    Contract(String),
    /// The integrator produced a non-finite value.
    #[error("numerical blowup at t = {t} ns: {field} reached magnitude {magnitude:e}")]
    Blowup {
        t: f64,
        field: &'static str,
        magnitude: f64,
    },
    /// A numerical tolerance was violated (trace drift, failed convergence, ...).
    #[error("numerics error: {0}")]
    Numerics(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: 2 for configuration/contract problems, 3 for
    /// numerical failures, 4 for i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Blowup { .. } | Error::Numerics(_) => 3,
            Error::Io(_) | Error::Json(_) => 4,
        }
    }
}
