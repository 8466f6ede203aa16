use thiserror::Error;

/// Errors raised across kernel calculus, sampling and estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("improper integral of k(u)/u diverges beyond u = {at}")]
    DivergentTail { at: f64 },

    #[error("kernel is degenerate: k(0) = {k0} >= 2, no finite moment of order above 1")]
    Degenerate { k0: f64 },

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("kernel `{0}` has no registered spectral measure")]
    NoSpectralForm(String),

    #[error("covariance is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("incompatible grid: {0}")]
    IncompatibleGrid(String),

    #[error("moment order {order} is outside the finite-moment range (bound {bound})")]
    MomentOutOfRange { order: f64, bound: f64 },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
