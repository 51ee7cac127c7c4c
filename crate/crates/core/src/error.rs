use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at node {node}")]
    NonFinite { node: usize },

    #[error("domain mismatch: expected {expected} side samples")]
    DomainMismatch { expected: &'static str },

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error("fiber dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dyadic block {k} exceeds the resolvable range 0..={k_max}")]
    BlockOutOfRange { k: usize, k_max: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("sector violation: {0}")]
    SectorViolation(String),

    #[error("matrix is not safely diagonalizable (eigenvector condition {condition:.3e})")]
    NotDiagonalizable { condition: f64 },

    #[error("contraction estimate {q_hat:.4} >= 1 at lambda = {lambda}; increase |lambda|")]
    NotContractive { q_hat: f64, lambda: f64 },

    #[error("weight degenerate: {0}")]
    DegenerateWeight(String),

    #[error("iteration did not converge after {iterations} steps (last increment {increment:.3e})")]
    NoConvergence { iterations: usize, increment: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
