use thiserror::Error;

use crate::linalg::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or unsupported configuration (mesh sizes, quadrature settings, ...).
    #[error("configuration error: {0}")]
    Config(String),
    /// A parameter outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expression error in `{expr}`: {message}")]
    Expr { expr: String, message: String },
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("solver did not converge: {message} (iterations {}, relative residual {:.3e})", report.iterations, report.relative_residual)]
    NonConvergence { message: String, report: SolveReport },
    /// Outer optimization loop exhausted its iteration budget; `best` holds
    /// the per-cell control with the smallest stationarity residual seen.
    #[error("optimization did not converge after {iterations} iterations (stationarity residual {residual:.3e})")]
    OptimizationNonConvergence {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("study aborted: {0}")]
    Study(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
