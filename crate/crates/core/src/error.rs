use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Parameter problems are reported as [`Error::InvalidParameter`] with the
/// offending name so that front ends can point at the right config key.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("exponential moment of order {q} is infinite (domain is ({lower}, {upper}))")]
    OutsideExponentialDomain { q: f64, lower: f64, upper: f64 },

    #[error("condition (H) fails: the offspring mean is infinite")]
    HypothesisH,

    #[error("level {level} is not reached by the dual Laplace exponent")]
    Unreachable { level: f64 },

    #[error("environment path does not match the configuration: {0}")]
    PathMismatch(String),

    #[error("backward solver step underflow at s = {s} (step {step:e})")]
    StepUnderflow { s: f64, step: f64 },

    #[error("backward solver did not reach tolerance {tol:e} (estimate {estimate:e})")]
    ToleranceNotMet { tol: f64, estimate: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("at least {needed} samples are needed, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}

pub(crate) fn ensure(cond: bool, name: &str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(invalid(name, reason))
    }
}
