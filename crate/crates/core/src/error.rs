use crate::grid::TorusGrid;

/// Errors raised by the solver, the model layer and the diagnostics.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("incompatible discretizations: {left:?} vs {right:?}")]
    GridMismatch { left: TorusGrid, right: TorusGrid },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quadrature did not reach tolerance {tol:e} (achieved error estimate {achieved:e})")]
    Quadrature { achieved: f64, tol: f64 },

    #[error("non-finite value {value} at step {step}, cell {cell}")]
    NonFinite { step: usize, cell: usize, value: f64 },

    #[error("time step {dt:e} exceeds the monotonicity limit {limit:e} at step {step}")]
    Cfl { step: usize, dt: f64, limit: f64 },

    #[error("initial data {value} lies below the obstacle {obstacle} at cell {cell}")]
    InitialBelowObstacle { cell: usize, value: f64, obstacle: f64 },

    #[error("linear solve did not converge: {0}")]
    LinearSolve(String),

    #[error("oracle not valid here: {0}")]
    Oracle(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
