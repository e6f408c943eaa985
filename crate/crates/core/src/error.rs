use thiserror::Error;

/// Errors produced by the analytic, optimization and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The primary queue has no stationary distribution.
    #[error("primary queue unstable: arrival rate {arrival} >= service rate {service}")]
    Unstable { arrival: f64, service: f64 },

    /// No policy satisfies the stability and delay constraints.
    #[error("no feasible policy: {0}")]
    Infeasible(String),

    #[error("degenerate parameters: {0}")]
    Degenerate(&'static str),

    /// Unreadable or inconsistent run configuration.
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tolerance used when checking that a value lies in `[0, 1]`.
pub const PROB_TOL: f64 = 1e-12;

/// Validates a probability, snapping values within [`PROB_TOL`] of the unit
/// interval onto it.
pub(crate) fn check_prob(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() || !(-PROB_TOL..=1.0 + PROB_TOL).contains(&value) {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be a probability in [0, 1]",
        });
    }
    Ok(value.clamp(0.0, 1.0))
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snaps_tiny_excursions() {
        assert_eq!(check_prob("p", 1.0 + 1e-13).unwrap(), 1.0);
        assert_eq!(check_prob("p", -1e-13).unwrap(), 0.0);
        assert!(check_prob("p", 1.0 + 1e-9).is_err());
        assert!(check_prob("p", f64::NAN).is_err());
    }
}
