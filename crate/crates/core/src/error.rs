use thiserror::Error;

/// Errors raised by the simulation, optimization and chain modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Population reached the guard band at the top of the truncated Fock space.
    #[error(
        "truncation failure{}: guard-band population {leak:.3e} exceeds threshold {threshold:.1e}",
        .pulse_index.map(|i| format!(" at pulse {i}")).unwrap_or_default()
    )]
    Truncation {
        leak: f64,
        threshold: f64,
        pulse_index: Option<usize>,
    },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("invalid cycle file: {0}")]
    CycleFormat(String),

    #[error("noise draw failed: {0}")]
    NoiseDraw(String),
}

impl Error {
    /// Attach a pulse index to a truncation error; other errors pass through.
    pub fn at_pulse(self, index: usize) -> Self {
        match self {
            Error::Truncation {
                leak, threshold, ..
            } => Error::Truncation {
                leak,
                threshold,
                pulse_index: Some(index),
            },
            other => other,
        }
    }

    pub fn is_truncation(&self) -> bool {
        matches!(self, Error::Truncation { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
