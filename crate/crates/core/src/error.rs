use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("{what} is not positive definite (min eigenvalue {min_eig:e}, tolerance {tol:e})")]
    NotPositiveDefinite {
        what: String,
        min_eig: f64,
        tol: f64,
    },

    #[error(
        "positive semi-definiteness lost at t = {t}: min eigenvalue {min_eig:e} below -{tol:e}"
    )]
    PsdViolation { t: f64, min_eig: f64, tol: f64 },

    #[error("{0} did not converge")]
    NoConvergence(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("time {t} outside the range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model is not certifiable: {0}")]
    NotCertifiable(String),

    #[error("overflow: {0}")]
    Overflow(String),
}

pub type Result<T> = std::result::Result<T, Error>;
