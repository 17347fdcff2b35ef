use thiserror::Error;

/// Errors raised by the bound evaluators, oracles and simulators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("kernel is reducible: no unique stationary law")]
    Reducible,

    #[error("stationary solve did not reach tolerance (residual {residual:e})")]
    StationaryNotConverged { residual: f64 },

    #[error("degenerate minorization: pair ({x}, {x_prime}) has zero overlap")]
    DegenerateMinorization { x: usize, x_prime: usize },

    #[error("minorization certificate invalid: {0}")]
    InvalidCertificate(String),

    #[error("no geometric drift: lambda_min = {lambda_min} >= 1")]
    DriftViolation { lambda_min: f64 },

    #[error("residual kernel undefined for epsilon = 1")]
    ResidualUndefined,

    #[error("assumption (S) violated: lambda_c + b_c/(1+c) = {value} is not < 1")]
    SConditionViolated { value: f64 },

    #[error("AR coupling radius violates delta > (1-lambda)/(lambda-L): delta = {delta}, threshold = {threshold}")]
    DeltaTooSmall { delta: f64, threshold: f64 },

    #[error("quadrature did not converge: achieved error estimate {achieved:e}, requested {requested:e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("enumeration too large: {count} paths exceeds limit {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("accept-reject sampler stalled after {0} iterations")]
    SamplerStalled(u64),

    #[error("infeasible drift target: {0}")]
    Infeasible(String),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, BoundsError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> BoundsError {
    BoundsError::InvalidInput { field, reason: reason.into() }
}

impl BoundsError {
    /// True when the error describes bad user input rather than a failed computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Self::DimensionMismatch { .. }
                | Self::InvalidInput { .. }
                | Self::DegenerateMinorization { .. }
                | Self::InvalidCertificate(_)
                | Self::ResidualUndefined
                | Self::SConditionViolated { .. }
                | Self::DeltaTooSmall { .. }
                | Self::UnknownStrategy { .. }
        )
    }
}
