use num_complex::Complex64;
use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(ValidationReport),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty quadrature grid: u_min = {u_min} must be below u_max = {u_max}")]
    EmptyGrid { u_min: f64, u_max: f64 },

    #[error("argument {at} lies on the branch cut (-inf, -kappa] with kappa = {kappa}")]
    BranchCut { at: Complex64, kappa: f64 },

    #[error("Newton iteration did not converge after {iterations} steps (last iterate {last}, relative residual {residual:e})")]
    NoConvergence {
        last: Complex64,
        residual: f64,
        iterations: usize,
    },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("requires kappa > 0: {0}")]
    KappaGate(String),

    #[error("time {t} is outside the sampled range [{t_min}, {t_max}]")]
    OutOfRange { t: f64, t_min: f64, t_max: f64 },
}
