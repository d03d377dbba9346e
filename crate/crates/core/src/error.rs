use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed PLT1 content (bad magic, unknown dtype, truncated payload).
    #[error("{0}")]
    Format(String),

    #[error("non-finite at flat index {0}")]
    NonFinite(usize),

    /// Extent mismatch along a named axis.
    #[error("dimension mismatch on axis {axis}: expected {expected}, got {got}")]
    Dimension {
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conjugate gradient breakdown at iteration {iteration}: non-positive curvature {curvature:e}")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("non-finite value in {what} at iteration {iteration}")]
    Diverged { what: &'static str, iteration: usize },

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Checks that `got` equals `expected` for a named axis.
pub(crate) fn check_axis(axis: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            axis,
            expected,
            got,
        })
    }
}
