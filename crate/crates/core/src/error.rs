use thiserror::Error;

/// Errors produced by the solver core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: domain has d = {expected}, point has {found} coordinates")]
    DimensionMismatch { expected: usize, found: usize },

    /// Caller violated a documented precondition.
    #[error("invalid argument: {0}")]
    Usage(String),

    /// The layer construction produced a point it should never produce
    /// (left the closed domain, or failed to leave the boundary zone).
    #[error("geometry inconsistency at {point:?}: {reason}")]
    GeometryInconsistency { point: Vec<f64>, reason: String },

    #[error("compatibility condition violated: boundary integral of f is {value:?} (allowed {allowed:?})")]
    CompatibilityViolation { value: f64, allowed: f64 },

    #[error("boundary datum evaluated to {value} at boundary point {point:?}")]
    NonFiniteDatum { point: Vec<f64>, value: f64 },

    #[error("estimation failed: {0}")]
    EstimationFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
