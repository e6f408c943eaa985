//! Feedback-based scheme: after overhearing a NACK the secondary knows the
//! primary will retransmit, skips sensing and accesses with `access_retx`
//! using the whole slot.
//!
//! The primary queue becomes a two-phase chain. A head-of-line packet on its
//! first attempt succeeds with `alpha_p`; once it has failed it stays in the
//! retransmission phase and succeeds with `Gamma_p` per attempt. `pi_k` and
//! `eps_k` are the stationary probabilities of holding `k` packets in the
//! first-attempt and retransmission phase respectively.

use serde::Serialize;

use crate::analytic::{nofb, secondary_gains, AnalysisReport};
use crate::error::{Error, Result};
use crate::model::{
    PolicyFb, Scheme, SensingQuality, TrafficParams, FEASIBILITY_TOL, STABILITY_MARGIN,
};
use crate::outage::OutageProfile;

/// Below this distance from 1, `eta` is treated as perfect service and the
/// delay is summed from the stationary vectors.
const PERFECT_SERVICE_TOL: f64 = 1e-9;

/// First-attempt (`alpha_p`) and retransmission (`Gamma_p`) primary success
/// probabilities.
pub fn alpha_gamma(
    profile: &OutageProfile,
    policy: &PolicyFb,
    sensing: &SensingQuality,
    lambda_e: f64,
) -> (f64, f64) {
    let alpha = nofb::mu_p(profile, &policy.base, sensing, lambda_e);
    let retx = policy.access_retx;
    let gamma = (1.0 - lambda_e) * profile.primary
        + lambda_e * (retx * profile.primary_conc + (1.0 - retx) * profile.primary);
    (alpha, gamma)
}

/// Aggregate stationary quantities of the two-phase chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackChainStats {
    pub alpha: f64,
    pub gamma: f64,
    /// `lambda_p alpha_p + (1 - lambda_p) Gamma_p`; stability needs `lambda_p < eta`.
    pub eta: f64,
    /// `pi_0`, probability of an empty primary queue.
    pub idle: f64,
    /// `sum_{k >= 1} pi_k`, always equal to `lambda_p`.
    pub first_tx_mass: f64,
    /// `sum_{k >= 1} eps_k`.
    pub retx_mass: f64,
}

pub fn eta(alpha: f64, gamma: f64, lambda_p: f64) -> f64 {
    lambda_p * alpha + (1.0 - lambda_p) * gamma
}

fn check_stable(alpha: f64, gamma: f64, lambda_p: f64) -> Result<f64> {
    let eta = eta(alpha, gamma, lambda_p);
    if lambda_p >= eta || eta.is_nan() || lambda_p < 0.0 {
        return Err(Error::Unstable {
            arrival: lambda_p,
            service: eta,
        });
    }
    Ok(eta)
}

pub fn chain_stats(alpha: f64, gamma: f64, lambda_p: f64) -> Result<FeedbackChainStats> {
    let eta = check_stable(alpha, gamma, lambda_p)?;
    let idle = (eta - lambda_p) / gamma;
    Ok(FeedbackChainStats {
        alpha,
        gamma,
        eta,
        idle,
        first_tx_mass: idle * lambda_p * gamma / (eta - lambda_p),
        retx_mass: lambda_p / gamma * (1.0 - alpha),
    })
}

/// Common decay ratio `lambda (1 - eta) / ((1 - lambda) eta)` of both phases for `k >= 2`.
pub fn decay_ratio_fb(alpha: f64, gamma: f64, lambda_p: f64) -> f64 {
    let eta = eta(alpha, gamma, lambda_p);
    lambda_p * (1.0 - eta) / ((1.0 - lambda_p) * eta)
}

struct Terms {
    idle: f64,
    pi1: f64,
    eps1: f64,
    /// `pi_2` and `eps_2`; later terms decay by `ratio`.
    pi2: f64,
    eps2: f64,
    ratio: f64,
}

fn terms(alpha: f64, gamma: f64, lambda_p: f64) -> Result<Terms> {
    let eta = check_stable(alpha, gamma, lambda_p)?;
    let l = lambda_p;
    let idle = (eta - l) / gamma;
    // pi_k = idle * l (1 - alpha) / (1 - eta)^2 * ratio^k, rewritten around
    // ratio^2 / (1 - eta)^2 = l^2 / ((1 - l)^2 eta^2) so eta = 1 is harmless
    let lead = idle * (1.0 - alpha) * l * l / ((1.0 - l) * eta * eta);
    Ok(Terms {
        idle,
        pi1: idle * l / (1.0 - l) * (l + (1.0 - l) * gamma) / eta,
        eps1: idle * l / eta * (1.0 - alpha),
        pi2: lead * l / (1.0 - l),
        eps2: lead,
        ratio: l * (1.0 - eta) / ((1.0 - l) * eta),
    })
}

/// Stationary vectors `(pi_0..=pi_kmax, eps_0..=eps_kmax)`, with `eps_0 = 0`.
pub fn state_probs_fb(
    alpha: f64,
    gamma: f64,
    lambda_p: f64,
    k_max: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = terms(alpha, gamma, lambda_p)?;
    let mut pi = vec![t.idle];
    let mut eps = vec![0.0];
    if k_max >= 1 {
        pi.push(t.pi1);
        eps.push(t.eps1);
    }
    let (mut p, mut e) = (t.pi2, t.eps2);
    for _ in 2..=k_max {
        pi.push(p);
        eps.push(e);
        p *= t.ratio;
        e *= t.ratio;
    }
    Ok((pi, eps))
}

/// Smallest `k_max` whose neglected tail `sum_{k > k_max} (pi_k + eps_k)` is below `tol`.
pub fn tail_cutoff_fb(alpha: f64, gamma: f64, lambda_p: f64, tol: f64) -> Result<usize> {
    let t = terms(alpha, gamma, lambda_p)?;
    let rest = (t.pi2 + t.eps2) / (1.0 - t.ratio);
    if t.pi1 + t.eps1 + rest < tol {
        return Ok(0);
    }
    let mut tail = rest;
    let mut k = 1;
    while tail >= tol && tail > 0.0 {
        k += 1;
        tail *= t.ratio;
    }
    Ok(k)
}

/// Mean secondary service rate of the feedback scheme.
pub fn mu_s_fb(
    profile: &OutageProfile,
    policy: &PolicyFb,
    sensing: &SensingQuality,
    lambda_e: f64,
    stats: &FeedbackChainStats,
) -> f64 {
    let (idle_gain, busy_gain) = secondary_gains(profile, &policy.base, sensing);
    mu_s_from_gains(
        stats,
        idle_gain,
        busy_gain,
        policy.access_retx * profile.sec_full_conc,
        lambda_e,
    )
}

/// `retx_gain` is the per-slot success probability in a retransmission slot.
pub(crate) fn mu_s_from_gains(
    stats: &FeedbackChainStats,
    idle_gain: f64,
    busy_gain: f64,
    retx_gain: f64,
    lambda_e: f64,
) -> f64 {
    lambda_e
        * (stats.idle * idle_gain + stats.first_tx_mass * busy_gain + stats.retx_mass * retx_gain)
}

/// Mean primary sojourn time in slots.
pub fn delay_fb(alpha: f64, gamma: f64, lambda_p: f64) -> Result<f64> {
    let eta = check_stable(alpha, gamma, lambda_p)?;
    let l = lambda_p;
    if l == 0.0 {
        // a lone packet: one first attempt, then geometric retransmissions
        return Ok(1.0 + (1.0 - alpha) / gamma);
    }
    if 1.0 - eta < PERFECT_SERVICE_TOL {
        let k_max = tail_cutoff_fb(alpha, gamma, l, 1e-16)?.max(2);
        let (pi, eps) = state_probs_fb(alpha, gamma, l, k_max)?;
        let weighted: f64 = (1..=k_max).map(|k| k as f64 * (pi[k] + eps[k])).sum();
        return Ok(weighted / l);
    }
    let num = (alpha - eta) * (eta - l).powi(2) + (1.0 - l).powi(2) * (1.0 - alpha) * eta;
    let den = (eta - l) * (1.0 - l) * (1.0 - eta) * gamma;
    Ok(num / den)
}

/// Evaluates the feedback scheme at one operating point.
pub fn analyze_fb(
    profile: &OutageProfile,
    policy: &PolicyFb,
    sensing: &SensingQuality,
    traffic: &TrafficParams,
) -> AnalysisReport {
    let (alpha, gamma) = alpha_gamma(profile, policy, sensing, traffic.lambda_e);
    let threshold = eta(alpha, gamma, traffic.lambda_p);
    let primary_stable = traffic.lambda_p <= threshold - STABILITY_MARGIN;
    let stats = chain_stats(alpha, gamma, traffic.lambda_p)
        .ok()
        .filter(|_| primary_stable);
    let (mu_s, idle, delay) = match stats {
        Some(st) => (
            mu_s_fb(profile, policy, sensing, traffic.lambda_e, &st),
            st.idle,
            delay_fb(alpha, gamma, traffic.lambda_p).unwrap_or(f64::INFINITY),
        ),
        None => {
            // never empty: every slot is a first attempt or a retransmission
            let retx = 1.0 - alpha;
            let first = 1.0 / (1.0 + retx / gamma.max(f64::MIN_POSITIVE));
            let st = FeedbackChainStats {
                alpha,
                gamma,
                eta: threshold,
                idle: 0.0,
                first_tx_mass: first,
                retx_mass: 1.0 - first,
            };
            (
                mu_s_fb(profile, policy, sensing, traffic.lambda_e, &st),
                0.0,
                f64::INFINITY,
            )
        }
    };
    AnalysisReport {
        scheme: Scheme::Feedback,
        mu_p: threshold,
        mu_s,
        idle_prob: idle,
        delay,
        primary_stable,
        delay_feasible: primary_stable && delay <= traffic.delay_bound + FEASIBILITY_TOL,
        secondary_stable: traffic.lambda_s < mu_s,
        chain: stats,
    }
}
