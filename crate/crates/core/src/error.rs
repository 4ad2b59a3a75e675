use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("lattice dimension must be at least 2 (got {0})")]
    Dimension(usize),

    #[error("series diverges: fugacity {phi} is not below the critical value {phi_c}")]
    Divergence { phi: f64, phi_c: f64 },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("occupancy overflow at site {site}")]
    Overflow { site: usize },

    #[error("time step {dt} violates the stability bound; largest admissible dt is {max_dt}")]
    Cfl { dt: f64, max_dt: f64 },

    #[error("grid shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: Vec<usize>, got: Vec<usize> },

    #[error("conjugate gradient failed to converge after {iterations} iterations (relative residual {residual:e})")]
    Solver {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("empty giant cluster")]
    EmptyCluster,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Solver { .. } | Error::Divergence { .. } | Error::Overflow { .. })
    }
}
