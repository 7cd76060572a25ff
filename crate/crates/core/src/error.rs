use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the mesh / assembly / inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("mesh refinement did not terminate after {0} passes")]
    RefinementFailure(usize),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("point {index} lies outside the meshed domain")]
    PointOutsideDomain { index: usize },
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("assembly error: {0}")]
    AssemblyError(String),
    #[error("unsupported Matérn smoothness nu = {0}")]
    UnsupportedSmoothness(f64),
    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),
    #[error("invalid effort: {0}")]
    InvalidEffort(String),
    #[error("dimension mismatch: {0}")]
    BuildError(String),
    #[error("linear predictor overflow at row {row} (eta = {eta})")]
    EtaOverflow { row: usize, eta: f64 },
    #[error(
        "Newton iterations did not converge in {iterations} steps (gradient norm {grad_norm:.3e})"
    )]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),
    #[error("hyperparameter optimisation failed: {0}")]
    HyperOptFailure(String),
    #[error("expected point count {0:.3e} exceeds the simulation guard")]
    TooIntense(f64),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
