use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite gradient encountered in {0}; step rejected")]
    NonFiniteGradient(&'static str),

    #[error("non-finite loss at iteration {iteration}: {breakdown}")]
    NonFiniteLoss {
        iteration: u64,
        breakdown: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("column '{0}' has zero variance; standardization undefined")]
    ZeroVarianceColumn(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("unknown label '{0}' in test data (not seen during fit)")]
    UnknownLabel(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite values in {0}")]
    NonFiniteInput(&'static str),

    #[error("zero-norm vector passed to {0}")]
    ZeroVector(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
