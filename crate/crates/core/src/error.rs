use thiserror::Error;

/// Errors raised by the numerical and modelling layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("numerical failure in {routine}: {reason}")]
    NumericalFailure { routine: &'static str, reason: String },

    #[error("singular system (smallest singular value {sigma_min:e} against norm {norm:e})")]
    Singular { sigma_min: f64, norm: f64 },

    #[error("matrix exponential would overflow: t * abscissa = {0:e} > 700")]
    Overflow(f64),

    #[error("parameters match no witness case: {0}")]
    CaseMismatch(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(routine: &'static str, reason: impl Into<String>) -> Self {
        Error::NumericalFailure {
            routine,
            reason: reason.into(),
        }
    }
}
