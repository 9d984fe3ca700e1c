use thiserror::Error;

pub type Result<T, E = AtmError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtmError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("B not invertible at z = {z}")]
    SingularB { z: f64 },

    #[error("coefficient evaluation failed at z = {z}: {reason}")]
    Coefficient { z: f64, reason: String },

    #[error("coefficients are not hermitean-class: {0}")]
    NotHermitean(String),

    #[error("eta must be non-negative, got {0}")]
    NegativeEta(f64),

    #[error(
        "transfer matrix from z = {z_from} to z = {z_to} is ill-conditioned (cond = {cond:e}); \
         subdivide the layer or use the Green-function route"
    )]
    IllConditioned { z_from: f64, z_to: f64, cond: f64 },

    #[error("integration did not converge near z = {z}: step size {step:e} underflowed")]
    StepUnderflow { z: f64, step: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("transconjugate unavailable off real axis (eta = {0})")]
    TransconjugateOffAxis(f64),

    #[error("companion matrix is defective at this spectral point (eigenvector condition {cond:e}); perturb eta")]
    Defective { cond: f64 },

    #[error("medium not regular at this spectral point: {right} right-decaying vs {left} left-decaying modes")]
    NotRegular { right: usize, left: usize },

    #[error("irregular medium: mode F-block is singular")]
    IrregularMedium,

    #[error("Green function undefined (degenerate limits)")]
    DegenerateLimits,

    #[error("quadrature did not converge: error estimate {estimate:e} above tolerance {tolerance:e}")]
    Quadrature { estimate: f64, tolerance: f64 },

    #[error("regularization required: eta must be positive")]
    NeedsRegularization,

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("{0}")]
    Parse(String),

    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
}

impl AtmError {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        AtmError::InvalidParameter { name: name.to_string(), reason: reason.into() }
    }
}
