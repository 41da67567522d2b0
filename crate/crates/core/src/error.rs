use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("determinant {det} differs from 1 by more than {tol}")]
    Determinant { det: f64, tol: f64 },

    #[error("basis matrix is singular")]
    Rank,

    #[error("unsupported lattice dimension {0} (expected 2..=5)")]
    UnsupportedDim(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("enumeration visited more than {limit} nodes")]
    EnumerationBudgetExceeded { limit: u64 },

    #[error("rejection sampler stalled after {0} proposals")]
    SamplerStall(u64),

    #[error("Haar sampling is only implemented for d = 2, got d = {0}")]
    UnsupportedDimension(usize),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("budget exceeded: {what} would reach {requested} (cap {cap})")]
    BudgetExceeded {
        what: &'static str,
        requested: u64,
        cap: u64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
