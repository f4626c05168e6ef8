use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("root is not bracketed: g({lo}) = {g_lo:e}, g({hi}) = {g_hi:e}")]
    Bracket {
        lo: f64,
        hi: f64,
        g_lo: f64,
        g_hi: f64,
    },
    #[error("eigensolver did not converge at lambda = {lambda} (residual {residual:e} after {iterations} iterations)")]
    NotConverged {
        lambda: f64,
        residual: f64,
        iterations: usize,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
