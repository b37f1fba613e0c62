use thiserror::Error;

/// Errors reported by the selection and resampling routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (empty input, length mismatch,
    /// out-of-range parameter, malformed serialized value).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested criterion is not defined for the given configuration,
    /// e.g. the Calinski-Harabasz index at K = 1 or K = n.
    #[error("criterion undefined: {0}")]
    UndefinedCriterion(String),

    /// Exhaustive enumeration was refused because the model space is too big.
    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
