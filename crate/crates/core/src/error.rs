use thiserror::Error;

use crate::requirements::OracleViolation;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Arguments that do not fit together (index-set mismatch, invalid tagged pair, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A supplied function broke its declared contract (refiner not below its
    /// argument, non-monotone name table, non-isomorphism, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// The requested check needs a capability the instance does not have.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("query error: {0}")]
    Query(String),

    #[error("malformed coding: {0}")]
    MalformedCoding(String),

    #[error("search bound {bound} exhausted: {context}")]
    SearchBound { bound: u64, context: String },

    #[error("bootstrap too early: {0}")]
    BootstrapTooEarly(String),

    #[error("infeasible schedule gap: gap {gap} < registry size {size}")]
    InfeasibleGap { gap: usize, size: usize },

    #[error("oracle violation: {0}")]
    Oracle(OracleViolation),

    #[error("engine abort: {0}")]
    Abort(String),

    #[error("trace format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
