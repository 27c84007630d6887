use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("no graph: {0}")]
    NoGraph(String),

    #[error("rejected: {0}")]
    Rejected(String),

    #[error("divergent integrand: {0}")]
    Divergent(String),

    #[error("quadrature budget exceeded on axis `{axis}`: error estimate {estimate:e} above tolerance {tolerance:e} after {evals} evaluations")]
    Budget {
        axis: String,
        estimate: f64,
        tolerance: f64,
        evals: usize,
    },

    #[error("non-finite integrand value on axis `{axis}` at x = {x}")]
    NonFinite { axis: String, x: f64 },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown case `{0}`")]
    UnknownCase(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
