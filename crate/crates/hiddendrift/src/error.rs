//! Error taxonomy shared by every module of the crate.
//!
//! Three failure classes cover everything the library can report:
//!
//! * [`Error::InvalidParameter`] — a caller broke a documented precondition
//!   (non-positive volatility, mismatched lengths, `gamma = 1`, ...).  These
//!   are programming or configuration mistakes and are always detectable
//!   before any numerics run.
//! * [`Error::Condition`] — the inputs are well formed but a mathematical
//!   applicability condition fails (Novikov bound, Riccati roots complex,
//!   value function blows up before the horizon).  Experiments abort on these
//!   rather than emit numbers the theory does not back.
//! * [`Error::Numeric`] — something went non-finite at run time (wealth
//!   overflow, filter collapse, internal consistency checks disagreeing).
//!   The message names the offending seed or quantity so the failure can be
//!   replayed.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for the crate.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// A documented precondition on the inputs was violated.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A mathematical applicability condition does not hold for these inputs.
    #[error("condition check failed: {0}")]
    Condition(String),

    /// A computation produced a non-finite or inconsistent result.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Builds an [`Error::InvalidParameter`] from anything displayable.
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Error::InvalidParameter(msg.to_string())
    }

    /// Builds an [`Error::Condition`] from anything displayable.
    pub fn condition(msg: impl std::fmt::Display) -> Self {
        Error::Condition(msg.to_string())
    }

    /// Builds an [`Error::Numeric`] from anything displayable.
    pub fn numeric(msg: impl std::fmt::Display) -> Self {
        Error::Numeric(msg.to_string())
    }
}

/// Returns `Ok(value)` when `value` is finite, otherwise an
/// [`Error::Numeric`] naming `what`.
pub fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::numeric(format!("{what} is not finite ({value})")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_error_display_includes_class_and_message() {
        let e = Error::invalid("sigma must be positive");
        assert_eq!(e.to_string(), "invalid parameter: sigma must be positive");
        let e = Error::condition("Novikov bound violated");
        assert_eq!(
            e.to_string(),
            "condition check failed: Novikov bound violated"
        );
        let e = Error::numeric("wealth overflow on path 3");
        assert_eq!(e.to_string(), "numeric failure: wealth overflow on path 3");
    }

    #[test]
    fn test_ensure_finite_accepts_finite_rejects_nan_and_inf() {
        assert_eq!(ensure_finite(1.5, "x").unwrap(), 1.5);
        assert!(ensure_finite(f64::NAN, "x").is_err());
        assert!(ensure_finite(f64::INFINITY, "x").is_err());
    }
}
