use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// Variants are classified as either *validation* errors (bad inputs,
/// violated preconditions, malformed files) or *runtime* errors (I/O,
/// backend transport, training divergence). The CLI maps the former to
/// exit code 2 and the latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("manifest error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Manifest { line: Option<usize>, message: String },

    #[error("degenerate point set: similarity fit is singular")]
    SingularFit,

    #[error("transport error ({}): {message}", if *.retryable { "retryable" } else { "fatal" })]
    Transport { message: String, retryable: bool },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Transport { .. } | Error::Divergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
