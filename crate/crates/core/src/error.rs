use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum WrcError {
    /// Malformed WRCT header or payload layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A value violates a type invariant (NaN, negative weight, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller-side precondition was not met (s != 1 for the s=1 path, lambda <= 0, ...).
    #[error("contract error: {0}")]
    Contract(String),

    /// An inverse FFT that should be real carried a large imaginary part.
    #[error(
        "numerical consistency error: imaginary residue {residue:.3e} exceeds {threshold:.1e}"
    )]
    NumericalConsistency { residue: f64, threshold: f64 },

    /// Dense normal equations could not be factored.
    #[error("singular system: {reason} (condition estimate {condition:.3e})")]
    Singularity { reason: String, condition: f64 },

    /// Dense problem exceeds the size guard.
    #[error("capacity error: {size} unknowns exceeds the limit of {limit}")]
    Capacity { size: usize, limit: usize },
}

impl WrcError {
    /// True for failures caused by arithmetic rather than by malformed inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            WrcError::NumericalConsistency { .. } | WrcError::Singularity { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, WrcError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(WrcError::Dimension(msg.into()))
}
