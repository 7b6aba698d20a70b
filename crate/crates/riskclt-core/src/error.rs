//! Error taxonomy shared by estimators, solvers, and the simulation harness.
//!
//! Scalar payloads are widened to `f64` so the error type stays free of
//! generic parameters and can cross module boundaries unchanged.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, RiskError>;

/// Everything that can go wrong while estimating a risk functional.
#[derive(Debug, thiserror::Error)]
pub enum RiskError {
    /// Vector or matrix dimensions do not line up.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// An input value was NaN or infinite where a finite number is required.
    #[error("non-finite input: {context}")]
    NonFiniteInput { context: String },

    /// An operation needs at least one observation.
    #[error("empty sample: {context}")]
    EmptySample { context: String },

    /// An intermediate mean left its declared compact domain box.
    #[error("domain escape at stage {stage}: point {point:?} outside box [{lo:?}, {hi:?}]")]
    DomainEscape {
        stage: usize,
        point: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    },

    /// The sample makes a formula ill-posed (zero deviation, zero tail mass).
    #[error("degenerate sample: {context}")]
    DegenerateSample { context: String },

    /// A stage needs a Jacobian that was not supplied.
    #[error("stage {stage} has no Jacobian; differentiation-based operations need one")]
    MissingJacobian { stage: usize },

    /// A minimization routine could not certify a solution.
    #[error("solver failure: {reason}")]
    SolverFailure { reason: String },

    /// Numerical integration failed to converge or the integral diverges.
    #[error("integration failure: {reason}")]
    IntegrationFailure { reason: String },

    /// A parameter is outside its documented range.
    #[error("invalid parameter: {context}")]
    InvalidParameter { context: String },

    /// A CSV cell or row could not be parsed.
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Filesystem failure while reading or writing data.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RiskError {
    /// Shorthand for [`RiskError::InvalidParameter`].
    pub fn invalid(context: impl Into<String>) -> Self {
        RiskError::InvalidParameter {
            context: context.into(),
        }
    }

    /// Shorthand for [`RiskError::NonFiniteInput`].
    pub fn non_finite(context: impl Into<String>) -> Self {
        RiskError::NonFiniteInput {
            context: context.into(),
        }
    }
}
