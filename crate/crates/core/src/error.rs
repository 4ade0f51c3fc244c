use thiserror::Error;

/// Errors produced by the functional-input GP toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid resolution must be at least 2 per dimension, got {0}")]
    Resolution(usize),

    #[error("functional inputs are defined on different quadrature grids")]
    GridMismatch,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("expression references undefined variable `{name}` (domain has {dim} dimension(s))")]
    UndefinedVariable { name: String, dim: usize },

    #[error("non-finite value {value} at node {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("Cholesky factorization failed (n = {n}, last nugget tried = {nugget:e})")]
    Cholesky { n: usize, nugget: f64 },

    #[error("predictive variance {variance:e} is below the clamp threshold -{threshold:e}")]
    NegativeVariance { variance: f64, threshold: f64 },

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("all hyperparameter starts failed: {0}")]
    FitFailed(String),

    #[error("design of size {size} failed: {source}")]
    Design { size: usize, source: Box<Error> },

    #[error("principal component {component}: {source}")]
    Component { component: usize, source: Box<Error> },

    #[error("all fields are identical (rank 0); use the mean field as a constant emulator")]
    RankZero,
}

pub type Result<T> = std::result::Result<T, Error>;
