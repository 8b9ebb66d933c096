use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("projected channel vanishes inside the nulled subspace")]
    DegenerateProjection,

    #[error("covariance factorization failed (input not positive definite)")]
    Factorization,

    #[error("clutter is identically zero, CNR cannot be calibrated")]
    ZeroClutter,

    #[error("configuration too large for the time-domain oracle: {0}")]
    OracleTooLarge(String),

    #[error("need at least {need} symbols, got {got}")]
    TooFewSymbols { got: usize, need: usize },

    #[error("empty input")]
    Empty,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
