use thiserror::Error;

/// Errors raised by the numeric routines.
///
/// Variants split into input errors (caller passed something invalid) and
/// numeric failures (a computation broke down on valid-looking input); the
/// CLI maps them to exit codes 2 and 3 respectively.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(String),

    #[error("matrix `{0}` is not symmetric positive semidefinite")]
    NotPsd(String),

    #[error("root bracketing failed for g = {gain}, gamma = {gamma}, budget = {budget}")]
    BracketFailure { gain: f64, gamma: f64, budget: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True when the error stems from invalid caller input rather than a
    /// numerical breakdown.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch { .. }
                | Error::NotPsd(_)
                | Error::Io(_)
                | Error::Parse(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
