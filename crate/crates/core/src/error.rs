use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("cannot condition on zero-probability symbol {0}")]
    ZeroProbability(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A computation was refused because it would exceed a size cap.
    #[error("refusing {what}: needs {needed}, limit is {limit}")]
    TooLarge {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for computational refusals (size caps, iteration caps) as
    /// opposed to malformed input.
    pub fn is_refusal(&self) -> bool {
        matches!(self, Error::TooLarge { .. } | Error::NoConvergence(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
