use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{0}` must be positive")]
    NonPositiveParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("wave function vanishes at z = {z}, t = {t} (density below floor)")]
    NodeSingularity { z: f64, t: f64 },

    #[error("rejection sampler acceptance rate {rate:.3e} is below 1e-3")]
    RejectionOverflow { rate: f64 },

    #[error("{failed} of {total} trajectories failed (limit is 0.1%): {first}")]
    EnsembleFailure {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("Fokker-Planck domain too small: density {density:.3e} at z_max = {z_max} by t = {t}")]
    DomainTooSmall { z_max: f64, t: f64, density: f64 },

    #[error("stability violation at t = {t}: {reason}")]
    StabilityViolation { t: f64, reason: String },

    #[error("curve `{0}` integrates to zero over the comparison window")]
    EmptyWindow(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    /// True for errors caused by bad input rather than a failing run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositiveParameter(_)
                | Error::InvalidConfig(_)
                | Error::GridMismatch(_)
                | Error::DomainTooSmall { .. }
        )
    }
}
