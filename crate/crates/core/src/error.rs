use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot vector: {0}")]
    InvalidKnotVector(String),
    #[error("point {x} outside the parameter range [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-conforming interface: {0}")]
    NonConforming(String),
    #[error("singular or inverted Jacobian in patch {patch} at {xi:?} (det = {det})")]
    SingularJacobian { patch: usize, xi: [f64; 3], det: f64 },
    #[error("topology error: {0}")]
    Topology(String),
    #[error("merge violates the boundary rule: {0}")]
    BoundaryMerge(String),
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("Chebyshev approximation did not converge within {max_points} points per direction (error {err:e})")]
    ChebyshevNoConvergence { max_points: usize, err: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("size cap exceeded: {size} > {cap}")]
    SizeCap { size: usize, cap: usize },
    #[error("preconditioner setup failed: {0}")]
    Preconditioner(String),
    #[error("solver breakdown at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
