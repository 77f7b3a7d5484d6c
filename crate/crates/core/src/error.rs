//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid assortment: {0}")]
    InvalidAssortment(String),

    #[error("model flag mismatch: {0}")]
    ModelFlag(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("iteration cap reached: {0}")]
    IterationCap(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("design initialization failed: {0}")]
    DegenerateGeometry(String),

    #[error("non-unique maximizer: revenue gap {0:.3e} below margin")]
    NonUniqueMaximizer(f64),

    #[error("instance generator gave up after {0} redraws")]
    RejectionCap(usize),

    #[error("round cap {0} exhausted during warm-up")]
    RoundCap(usize),

    #[error("timed out: {0}")]
    Timeout(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
