//! Closed-form service rates, stationary distributions and delays under the
//! backlogged-secondary approximation.

pub mod fb;
pub mod nofb;

use serde::Serialize;

use crate::model::{PolicyNoFb, Scheme, SensingQuality};
use crate::outage::OutageProfile;

pub use fb::FeedbackChainStats;

/// Per-slot secondary success probability given that it holds energy, split
/// by primary activity: `(primary idle, primary active and not retransmitting)`.
pub(crate) fn secondary_gains(
    profile: &OutageProfile,
    policy: &PolicyNoFb,
    sensing: &SensingQuality,
) -> (f64, f64) {
    let (ps, pf, pb, pt) = (
        policy.sense,
        policy.access_free,
        policy.access_busy,
        policy.access_direct,
    );
    let (fa, md) = (sensing.false_alarm, sensing.missed_detection);
    let idle = (1.0 - ps) * pt * profile.sec_full
        + ps * pb * fa * profile.sec_sensed
        + ps * pf * (1.0 - fa) * profile.sec_sensed;
    let busy = (1.0 - ps) * pt * profile.sec_full_conc
        + ps * pf * md * profile.sec_sensed_conc
        + ps * pb * (1.0 - md) * profile.sec_sensed_conc;
    (idle, busy)
}

/// Analytic evaluation of one operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub scheme: Scheme,
    /// Primary service rate. For the feedback scheme this is the stability
    /// threshold `eta = lambda_p alpha_p + (1 - lambda_p) Gamma_p`.
    pub mu_p: f64,
    pub mu_s: f64,
    /// Probability that the primary queue is empty.
    pub idle_prob: f64,
    /// Mean primary delay in slots (infinite when unstable).
    pub delay: f64,
    pub primary_stable: bool,
    pub delay_feasible: bool,
    pub secondary_stable: bool,
    /// Chain quantities of the feedback scheme.
    pub chain: Option<FeedbackChainStats>,
}

impl AnalysisReport {
    pub fn feasible(&self) -> bool {
        self.primary_stable && self.delay_feasible
    }
}
