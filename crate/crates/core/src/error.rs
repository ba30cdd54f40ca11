use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("matrix is singular")]
    Singular,

    #[error("coefficient field violates ellipticity at cell {cell:?}: eigenvalues {eigs:?} not in [1, {lambda}]")]
    Ellipticity {
        cell: Vec<usize>,
        eigs: Vec<f64>,
        lambda: f64,
    },

    #[error("source is not compatible: discrete mean {0:e} is not zero")]
    IncompatibleSource(f64),

    #[error("conjugate gradient did not converge in {iterations} iterations (last relative residual {last:e})")]
    NotConverged {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    #[error("corrector table holds orders up to {have}, need {need}")]
    TableTooShort { have: usize, need: usize },

    #[error("quadrature refused: {0}")]
    Quadrature(String),

    #[error("zero denominator: {0}")]
    ZeroNorm(String),

    #[error("format error in {file}: {msg}")]
    Format { file: String, msg: String },

    #[error("i/o error on {file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
