//! Policies, sensing quality and traffic parameters shared by the analytic
//! models, the optimizer and the simulator.

use serde::{Deserialize, Serialize};

use crate::error::{check_prob, Error, Result};

/// Margin applied to the primary stability constraint: a configuration is
/// treated as stable when `lambda_p <= service - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

/// Slack allowed on the delay constraint when reporting feasibility.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Access scheme of the secondary user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Sensing and random access, primary feedback ignored.
    NoFeedback,
    /// Sensing and random access plus blind access after an overheard NACK.
    Feedback,
    /// Plain random access: never senses.
    RandomAccess,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Feedback, Scheme::NoFeedback, Scheme::RandomAccess];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::NoFeedback => "no_feedback",
            Scheme::Feedback => "feedback",
            Scheme::RandomAccess => "random_access",
        }
    }

    pub fn uses_feedback(self) -> bool {
        matches!(self, Scheme::Feedback)
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "no_feedback" | "nofb" => Ok(Scheme::NoFeedback),
            "feedback" | "fb" => Ok(Scheme::Feedback),
            "random_access" | "ra" => Ok(Scheme::RandomAccess),
            other => Err(format!(
                "unknown scheme `{other}` (expected feedback, no_feedback or random_access)"
            )),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sensing and access probabilities of the sensing-only scheme.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyNoFb {
    /// Probability of sensing at the start of the slot.
    pub sense: f64,
    /// Access probability when the channel is sensed free.
    pub access_free: f64,
    /// Access probability when the channel is sensed busy.
    pub access_busy: f64,
    /// Access probability when the slot is not sensed.
    pub access_direct: f64,
}

impl PolicyNoFb {
    pub fn new(sense: f64, access_free: f64, access_busy: f64, access_direct: f64) -> Result<Self> {
        let p = PolicyNoFb {
            sense,
            access_free,
            access_busy,
            access_direct,
        };
        p.validate()
    }

    /// The policy that never transmits.
    pub fn silent() -> Self {
        Self::default()
    }

    pub fn validate(self) -> Result<Self> {
        Ok(PolicyNoFb {
            sense: check_prob("sense", self.sense)?,
            access_free: check_prob("access_free", self.access_free)?,
            access_busy: check_prob("access_busy", self.access_busy)?,
            access_direct: check_prob("access_direct", self.access_direct)?,
        })
    }

    /// Probability of transmitting in a slot where the primary is active
    /// (and not known to be retransmitting).
    pub fn access_when_busy(&self, sensing: &SensingQuality) -> f64 {
        (1.0 - self.sense) * self.access_direct
            + self.sense
                * (sensing.missed_detection * self.access_free
                    + (1.0 - sensing.missed_detection) * self.access_busy)
    }

    /// Probability of transmitting in a slot where the primary is idle.
    pub fn access_when_idle(&self, sensing: &SensingQuality) -> f64 {
        (1.0 - self.sense) * self.access_direct
            + self.sense
                * ((1.0 - sensing.false_alarm) * self.access_free
                    + sensing.false_alarm * self.access_busy)
    }
}

/// Feedback-scheme policy: the sensing-only policy plus the access
/// probability used in a slot that follows a primary NACK.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyFb {
    #[serde(flatten)]
    pub base: PolicyNoFb,
    pub access_retx: f64,
}

impl PolicyFb {
    pub fn new(base: PolicyNoFb, access_retx: f64) -> Result<Self> {
        Ok(PolicyFb {
            base: base.validate()?,
            access_retx: check_prob("access_retx", access_retx)?,
        })
    }

    pub fn silent() -> Self {
        Self::default()
    }

    /// Components in the canonical order `(sense, free, busy, direct, retx)`.
    pub fn to_array(&self) -> [f64; 5] {
        [
            self.base.sense,
            self.base.access_free,
            self.base.access_busy,
            self.base.access_direct,
            self.access_retx,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        PolicyFb {
            base: PolicyNoFb {
                sense: v[0],
                access_free: v[1],
                access_busy: v[2],
                access_direct: v[3],
            },
            access_retx: v[4],
        }
    }
}

/// Spectrum sensing error probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SensingQuality {
    pub false_alarm: f64,
    pub missed_detection: f64,
}

impl SensingQuality {
    pub fn new(false_alarm: f64, missed_detection: f64) -> Result<Self> {
        Ok(SensingQuality {
            false_alarm: check_prob("false_alarm", false_alarm)?,
            missed_detection: check_prob("missed_detection", missed_detection)?,
        })
    }

    pub fn validate(self) -> Result<Self> {
        Self::new(self.false_alarm, self.missed_detection)
    }
}

fn unbounded() -> f64 {
    f64::INFINITY
}

/// Bernoulli arrival rates and the primary delay bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    /// Primary packet arrival rate (packets/slot).
    pub lambda_p: f64,
    /// Secondary packet arrival rate (packets/slot).
    #[serde(default = "one")]
    pub lambda_s: f64,
    /// Energy arrival rate (units/slot).
    pub lambda_e: f64,
    /// Maximum mean primary delay in slots; infinite means unconstrained.
    #[serde(default = "unbounded")]
    pub delay_bound: f64,
}

fn one() -> f64 {
    1.0
}

impl TrafficParams {
    pub fn new(lambda_p: f64, lambda_s: f64, lambda_e: f64, delay_bound: f64) -> Result<Self> {
        TrafficParams {
            lambda_p,
            lambda_s,
            lambda_e,
            delay_bound,
        }
        .validate()
    }

    pub fn validate(self) -> Result<Self> {
        if self.delay_bound.is_nan() || self.delay_bound < 1.0 {
            return Err(Error::InvalidParameter {
                name: "delay_bound",
                value: self.delay_bound,
                reason: "must be >= 1 slot (or infinite)",
            });
        }
        Ok(TrafficParams {
            lambda_p: check_prob("lambda_p", self.lambda_p)?,
            lambda_s: check_prob("lambda_s", self.lambda_s)?,
            lambda_e: check_prob("lambda_e", self.lambda_e)?,
            delay_bound: self.delay_bound,
        })
    }

    /// Smallest primary service rate that meets the delay bound under the
    /// sensing-only queue model, `lambda_p + (1 - lambda_p) / bound`.
    pub fn required_service_rate(&self) -> f64 {
        if self.delay_bound.is_infinite() {
            self.lambda_p
        } else {
            self.lambda_p + (1.0 - self.lambda_p) / self.delay_bound
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range() {
        assert!(PolicyNoFb::new(1.1, 0.0, 0.0, 0.0).is_err());
        assert!(PolicyFb::new(PolicyNoFb::silent(), -0.5).is_err());
        assert!(TrafficParams::new(0.1, 0.1, 0.5, 0.5).is_err());
        assert!(TrafficParams::new(0.1, 0.1, 0.5, f64::INFINITY).is_ok());
        assert!(SensingQuality::new(0.1, 2.0).is_err());
    }

    #[test]
    fn access_probabilities() {
        let s = SensingQuality::new(0.1, 0.08).unwrap();
        let direct = PolicyNoFb::new(0.0, 0.3, 0.7, 1.0).unwrap();
        assert_eq!(direct.access_when_busy(&s), 1.0);
        let sensing = PolicyNoFb::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((sensing.access_when_busy(&s) - 0.08).abs() < 1e-15);
        assert!((sensing.access_when_idle(&s) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("fb".parse::<Scheme>().unwrap(), Scheme::Feedback);
        assert_eq!(
            "random_access".parse::<Scheme>().unwrap(),
            Scheme::RandomAccess
        );
        assert!("aloha".parse::<Scheme>().is_err());
    }
}
