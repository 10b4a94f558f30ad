use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("x = {x} lies outside the valid window [{lo}, {hi}]")]
    Window { x: f64, lo: f64, hi: f64 },

    #[error("valid window exhausted: can reach t = {max_t} but {requested} was requested")]
    WindowExhausted { max_t: f64, requested: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("truncation budget {budget:.3e} exceeds allowance {allowance:.3e}")]
    Truncation { budget: f64, allowance: f64 },

    #[error("not converged: {0}")]
    NotConverged(String),

    #[error("coefficients are not conjugate-symmetric at k = {k}")]
    Symmetry { k: i64 },

    #[error("no contraction after {iterations} iterations (last distance {distance:.3e})")]
    Divergence { iterations: usize, distance: f64 },

    #[error("certification failed: {0}")]
    Certification(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("certificate refuted at period {period}: measured {measured:.6e} > bound {bound:.6e}")]
    Refuted {
        period: usize,
        measured: f64,
        bound: f64,
    },

    #[error("population cap {cap} exceeded at t = {time}")]
    Horizon { cap: usize, time: f64 },

    #[error("entropy check failed: {0}")]
    Entropy(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
