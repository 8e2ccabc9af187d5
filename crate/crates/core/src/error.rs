use thiserror::Error;

/// Errors raised by the model, filter, scheduler and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The primary agent reached or left the region boundary, where the
    /// restoring force is undefined.
    #[error("degenerate geometry: distance {distance} m from center is not inside radius {radius} m")]
    DegenerateGeometry { distance: f64, radius: f64 },

    /// The Rician link cannot meet the outage target at any power.
    #[error("infeasible link: sqrt(2G) = {sqrt_2g} must exceed Q^-1(eps) = {q_inv_eps}")]
    InfeasibleLink { sqrt_2g: f64, q_inv_eps: f64 },

    #[error("innovation covariance is singular or ill-conditioned (condition number {condition})")]
    SingularInnovation { condition: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
