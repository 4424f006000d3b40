use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("operation requires a one-dimensional grid, got n = {0}")]
    NotOneDimensional(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point {0:?} is not finite")]
    NonFinitePoint(Vec<f64>),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("prox step {step} stopped after {iterations} iterations with duality gap {gap:e} above {tol:e}")]
    ProxFailed {
        step: usize,
        iterations: usize,
        gap: f64,
        tol: f64,
    },
    #[error("step {step} rejected: sup norm {norm:e} exceeds guard {guard:e}")]
    StepRejected { step: usize, norm: f64, guard: f64 },
    #[error("grid with k = {fine} is not a refinement of k = {coarse}")]
    NotCommensurate { coarse: usize, fine: usize },
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
