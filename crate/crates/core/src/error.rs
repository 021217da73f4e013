use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CmatError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CmatError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cooperativity is undefined for kappa={kappa}, gamma={gamma}")]
    UndefinedCooperativity { kappa: f64, gamma: f64 },

    #[error("dark state is degenerate: both Rabi frequencies vanish")]
    DegenerateState,

    #[error("spectrum is degenerate: {0}")]
    DegenerateSpectrum(String),

    #[error("adiabatic gap |omega_1| vanishes")]
    SingularGap,

    #[error("integration failed at t={t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },

    #[error("probe omega0={omega0} at tau={tau} (g={g}, kappa={kappa}, gamma={gamma}) failed: {source}")]
    Probe {
        omega0: f64,
        tau: f64,
        g: f64,
        kappa: f64,
        gamma: f64,
        #[source]
        source: Box<CmatError>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CmatError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        CmatError::InvalidParameter { name, reason: reason.into() }
    }
}
