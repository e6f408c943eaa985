//! Slot-level Monte Carlo of the primary queue, the secondary data queue and
//! the secondary energy queue.
//!
//! Each slot runs, in order: the secondary access decision from the state at
//! the start of the slot, the channel draws, departures and energy use, and
//! finally the Bernoulli arrivals, which are first eligible for service in the
//! next slot. The primary ACK/NACK of the slot is remembered for the next one.
//!
//! Randomness comes from ChaCha8 with one independent stream per decision
//! category, and every category is drawn exactly once per slot whether or not
//! it is used. Two runs with the same seed therefore see the same arrivals,
//! sensing outcomes and fading, which is what the common-random-number
//! comparisons in [`crate::validate`] rely on.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PolicyFb, Scheme, SensingQuality, TrafficParams};
use crate::outage::{OutageProfile, TxStart};

/// Identifies the generator in reports.
pub const RNG_NAME: &str = "chacha8/stream-per-category";

/// Number of batches used for the batch-means confidence intervals.
pub const BATCHES: usize = 30;

/// Normal quantile of the reported 95% half-widths.
const Z95: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimSemantics {
    /// Secondary transmits only real packets and spends energy only when it
    /// transmits.
    Exact,
    /// Backlogged secondary (dummy packets when `Q_s` is empty) and one energy
    /// unit drained every slot in which `Q_e > 0`.
    Backlogged,
}

impl SimSemantics {
    pub fn name(self) -> &'static str {
        match self {
            SimSemantics::Exact => "exact",
            SimSemantics::Backlogged => "backlogged",
        }
    }
}

impl std::str::FromStr for SimSemantics {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SimSemantics::Exact),
            "backlogged" | "approx" => Ok(SimSemantics::Backlogged),
            other => Err(format!(
                "unknown semantics `{other}` (expected exact or backlogged)"
            )),
        }
    }
}

/// Random decision categories; each owns one ChaCha stream.
#[derive(Clone, Copy)]
enum Stream {
    PrimaryArrival = 0,
    SecondaryArrival = 1,
    EnergyArrival = 2,
    SenseDecision = 3,
    SenseOutcome = 4,
    Access = 5,
    PrimaryChannel = 6,
    SecondaryChannel = 7,
}

const STREAMS: usize = 8;

struct Streams([ChaCha8Rng; STREAMS]);

impl Streams {
    fn new(seed: u64) -> Self {
        Streams(std::array::from_fn(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        }))
    }

    fn uniform(&mut self, s: Stream) -> f64 {
        self.0[s as usize].gen::<f64>()
    }
}

/// Everything the simulator needs besides the run length and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    /// `Feedback` enables the NACK rule; the other schemes only differ in
    /// their policy.
    pub scheme: Scheme,
    pub policy: PolicyFb,
    pub profile: OutageProfile,
    pub sensing: SensingQuality,
    pub traffic: TrafficParams,
    /// Energy queue capacity; `None` is unbounded.
    pub energy_capacity: Option<u64>,
}

/// Point estimate with batch-means uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error from the spread of the batch means.
    pub std_err: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
}

impl Estimate {
    /// Mean from totals, uncertainty from per-batch ratios `num / den`;
    /// batches with `den = 0` are skipped.
    fn from_batches(num: &[f64], den: &[f64]) -> Estimate {
        let total_den: f64 = den.iter().sum();
        let mean = if total_den > 0.0 {
            num.iter().sum::<f64>() / total_den
        } else {
            f64::NAN
        };
        let ratios: Vec<f64> = num
            .iter()
            .zip(den)
            .filter(|(_, &d)| d > 0.0)
            .map(|(&n, &d)| n / d)
            .collect();
        let b = ratios.len();
        let std_err = if b >= 2 {
            let m = ratios.iter().sum::<f64>() / b as f64;
            let var = ratios.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (b - 1) as f64;
            (var / b as f64).sqrt()
        } else {
            f64::INFINITY
        };
        Estimate {
            mean,
            std_err,
            half_width: Z95 * std_err,
        }
    }
}

/// Sensing outcome counts, split by the true primary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SensingCounts {
    pub sensed_idle: u64,
    pub false_alarms: u64,
    pub sensed_active: u64,
    pub missed_detections: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EnergyLedger {
    pub arrivals: u64,
    /// Arrivals lost to a full energy queue.
    pub dropped: u64,
    pub consumed: u64,
    pub final_level: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStats {
    pub slots: u64,
    pub rng: &'static str,
    pub semantics: SimSemantics,
    /// Primary successes per slot with a nonempty primary queue.
    pub mu_p: Estimate,
    /// Secondary successes per slot (dummy packets included under `Backlogged`).
    pub mu_s: Estimate,
    /// Energy units consumed per slot.
    pub mu_e: Estimate,
    /// Mean primary sojourn (departure slot minus arrival slot).
    pub delay: Estimate,
    pub mean_qp: Estimate,
    pub mean_qs: Estimate,
    pub empty_frac_p: Estimate,
    /// Fraction of slots that follow a primary NACK.
    pub retx_frac: Estimate,
    /// Admitted primary arrivals per slot.
    pub lambda_p: f64,
    pub primary_departures: u64,
    pub secondary_departures: u64,
    pub sensing: SensingCounts,
    pub energy: EnergyLedger,
    pub final_qp: u64,
    pub final_qs: u64,
    /// Mean primary queue length over the first and last tenth of the run.
    pub qp_first_decile: f64,
    pub qp_last_decile: f64,
}

impl SimStats {
    /// Drift heuristic for an unstable primary queue: the last tenth of the run
    /// holds on average more than ten times the backlog of the first tenth
    /// (floored at one packet).
    pub fn primary_drifts(&self) -> bool {
        self.qp_last_decile > 10.0 * self.qp_first_decile.max(1.0)
    }

    /// `mean_qp - lambda_p * delay`.
    pub fn little_residual(&self) -> f64 {
        self.mean_qp.mean - self.lambda_p * self.delay.mean
    }
}

#[derive(Default, Clone)]
struct Batch {
    slots: f64,
    busy: f64,
    primary_success: f64,
    secondary_success: f64,
    energy_used: f64,
    sojourn: f64,
    departures: f64,
    qp: f64,
    qs: f64,
    empty: f64,
    retx: f64,
}

/// Runs the system for `n_slots` slots.
pub fn run(setup: &SimSetup, semantics: SimSemantics, n_slots: u64, seed: u64) -> Result<SimStats> {
    if n_slots == 0 {
        return Err(Error::InvalidParameter {
            name: "n_slots",
            value: 0.0,
            reason: "must be >= 1",
        });
    }
    let policy = PolicyFb::new(setup.policy.base, setup.policy.access_retx)?;
    let sensing = setup.sensing.validate()?;
    let traffic = setup.traffic.validate()?;
    let profile = setup.profile;
    let feedback = setup.scheme.uses_feedback();
    let approx = semantics == SimSemantics::Backlogged;

    let mut rng = Streams::new(seed);
    let mut primary: VecDeque<u64> = VecDeque::new();
    let mut qs: u64 = 0;
    let mut qe: u64 = 0;
    let mut nack = false;

    let mut batches = vec![Batch::default(); BATCHES];
    let mut deciles = [0.0f64; 10];
    let mut decile_slots = [0u64; 10];
    let mut sensing_counts = SensingCounts::default();
    let mut energy = EnergyLedger::default();
    let (mut arrivals_p, mut departures_p, mut departures_s) = (0u64, 0u64, 0u64);

    for t in 0..n_slots {
        let u_arr_p = rng.uniform(Stream::PrimaryArrival);
        let u_arr_s = rng.uniform(Stream::SecondaryArrival);
        let u_arr_e = rng.uniform(Stream::EnergyArrival);
        let u_sense = rng.uniform(Stream::SenseDecision);
        let u_outcome = rng.uniform(Stream::SenseOutcome);
        let u_access = rng.uniform(Stream::Access);
        let u_chan_p = rng.uniform(Stream::PrimaryChannel);
        let u_chan_s = rng.uniform(Stream::SecondaryChannel);

        let qp = primary.len() as u64;
        let active = qp > 0;
        let retx_slot = feedback && nack;

        let b = &mut batches[(t as u128 * BATCHES as u128 / n_slots as u128) as usize];
        let d = (t as u128 * 10 / n_slots as u128) as usize;
        deciles[d] += qp as f64;
        decile_slots[d] += 1;
        b.slots += 1.0;
        b.qp += qp as f64;
        b.qs += qs as f64;
        if !active {
            b.empty += 1.0;
        }
        if nack {
            b.retx += 1.0;
        }

        // secondary decision
        let mut transmit: Option<TxStart> = None;
        if qe > 0 && (approx || qs > 0) {
            if retx_slot {
                if u_access < policy.access_retx {
                    transmit = Some(TxStart::FullSlot);
                }
            } else if u_sense < policy.base.sense {
                let sensed_busy = if active {
                    sensing_counts.sensed_active += 1;
                    let busy = u_outcome < 1.0 - sensing.missed_detection;
                    if !busy {
                        sensing_counts.missed_detections += 1;
                    }
                    busy
                } else {
                    sensing_counts.sensed_idle += 1;
                    let busy = u_outcome < sensing.false_alarm;
                    if busy {
                        sensing_counts.false_alarms += 1;
                    }
                    busy
                };
                let p = if sensed_busy {
                    policy.base.access_busy
                } else {
                    policy.base.access_free
                };
                if u_access < p {
                    transmit = Some(TxStart::AfterSensing);
                }
            } else if u_access < policy.base.access_direct {
                transmit = Some(TxStart::FullSlot);
            }
        }

        // channel outcomes
        if active {
            b.busy += 1.0;
            let p = if transmit.is_some() {
                profile.primary_conc
            } else {
                profile.primary
            };
            let ok = u_chan_p < p;
            if ok {
                let arrived = primary.pop_front().expect("nonempty queue");
                b.primary_success += 1.0;
                b.departures += 1.0;
                b.sojourn += (t - arrived) as f64;
                departures_p += 1;
            }
            nack = !ok;
        } else {
            nack = false;
        }
        if let Some(start) = transmit {
            if u_chan_s < profile.secondary(active, start) {
                b.secondary_success += 1.0;
                if qs > 0 {
                    qs -= 1;
                    departures_s += 1;
                }
            }
        }

        // energy use
        let spend = if approx { qe > 0 } else { transmit.is_some() };
        if spend {
            qe -= 1;
            energy.consumed += 1;
            b.energy_used += 1.0;
        }

        // arrivals join at the end of the slot
        if u_arr_p < traffic.lambda_p {
            primary.push_back(t);
            arrivals_p += 1;
        }
        if u_arr_s < traffic.lambda_s {
            qs += 1;
        }
        if u_arr_e < traffic.lambda_e {
            energy.arrivals += 1;
            if setup.energy_capacity.is_none_or(|cap| qe < cap) {
                qe += 1;
            } else {
                energy.dropped += 1;
            }
        }
    }
    energy.final_level = qe;

    let col = |f: fn(&Batch) -> f64| -> Vec<f64> { batches.iter().map(f).collect() };
    let slots = col(|b| b.slots);
    let decile_mean = |i: usize| {
        if decile_slots[i] > 0 {
            deciles[i] / decile_slots[i] as f64
        } else {
            0.0
        }
    };
    Ok(SimStats {
        slots: n_slots,
        rng: RNG_NAME,
        semantics,
        mu_p: Estimate::from_batches(&col(|b| b.primary_success), &col(|b| b.busy)),
        mu_s: Estimate::from_batches(&col(|b| b.secondary_success), &slots),
        mu_e: Estimate::from_batches(&col(|b| b.energy_used), &slots),
        delay: Estimate::from_batches(&col(|b| b.sojourn), &col(|b| b.departures)),
        mean_qp: Estimate::from_batches(&col(|b| b.qp), &slots),
        mean_qs: Estimate::from_batches(&col(|b| b.qs), &slots),
        empty_frac_p: Estimate::from_batches(&col(|b| b.empty), &slots),
        retx_frac: Estimate::from_batches(&col(|b| b.retx), &slots),
        lambda_p: arrivals_p as f64 / n_slots as f64,
        primary_departures: departures_p,
        secondary_departures: departures_s,
        sensing: sensing_counts,
        energy,
        final_qp: primary.len() as u64,
        final_qs: qs,
        qp_first_decile: decile_mean(0),
        qp_last_decile: decile_mean(9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PolicyNoFb;

    fn setup(
        scheme: Scheme,
        policy: PolicyFb,
        lambda_p: f64,
        lambda_s: f64,
        lambda_e: f64,
    ) -> SimSetup {
        SimSetup {
            scheme,
            policy,
            profile: OutageProfile::from_ratios(0.7, 0.14, 0.6065, 0.1820, 0.9782, 0.8).unwrap(),
            sensing: SensingQuality::new(0.1, 0.08).unwrap(),
            traffic: TrafficParams::new(lambda_p, lambda_s, lambda_e, f64::INFINITY).unwrap(),
            energy_capacity: None,
        }
    }

    fn mixed_policy() -> PolicyFb {
        PolicyFb::new(PolicyNoFb::new(0.5, 0.8, 0.3, 0.6).unwrap(), 0.7).unwrap()
    }

    #[test]
    fn no_energy_no_secondary_service() {
        for sem in [SimSemantics::Exact, SimSemantics::Backlogged] {
            let s = setup(Scheme::Feedback, mixed_policy(), 0.2, 1.0, 0.0);
            let st = run(&s, sem, 20_000, 3).unwrap();
            assert_eq!(st.mu_s.mean, 0.0);
            assert_eq!(st.secondary_departures, 0);
            assert_eq!(st.energy.consumed, 0);
        }
    }

    #[test]
    fn same_seed_same_stats() {
        let s = setup(Scheme::Feedback, mixed_policy(), 0.2, 0.3, 0.6);
        let a = run(&s, SimSemantics::Exact, 50_000, 11).unwrap();
        let b = run(&s, SimSemantics::Exact, 50_000, 11).unwrap();
        assert_eq!(a, b);
        let c = run(&s, SimSemantics::Exact, 50_000, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn energy_is_conserved() {
        let mut s = setup(Scheme::NoFeedback, mixed_policy(), 0.2, 0.3, 0.6);
        for sem in [SimSemantics::Exact, SimSemantics::Backlogged] {
            for cap in [None, Some(3)] {
                s.energy_capacity = cap;
                let st = run(&s, sem, 40_000, 5).unwrap();
                let e = st.energy;
                assert_eq!(e.arrivals - e.dropped - e.consumed, e.final_level);
                if cap.is_none() {
                    assert_eq!(e.dropped, 0);
                } else {
                    assert!(e.final_level <= 3);
                }
            }
        }
    }

    #[test]
    fn approx_drains_one_unit_per_slot_with_energy() {
        // energy level is always 0 or 1, so consumption equals arrivals up to the last slot
        let s = setup(Scheme::NoFeedback, mixed_policy(), 0.2, 0.0, 0.6);
        let st = run(&s, SimSemantics::Backlogged, 40_000, 9).unwrap();
        assert!(st.energy.final_level <= 1);
        assert_eq!(
            st.energy.arrivals - st.energy.final_level,
            st.energy.consumed
        );
    }

    #[test]
    fn exact_spends_energy_only_on_transmissions() {
        let silent = PolicyFb::silent();
        let s = setup(Scheme::Feedback, silent, 0.2, 1.0, 0.6);
        let st = run(&s, SimSemantics::Exact, 10_000, 9).unwrap();
        assert_eq!(st.energy.consumed, 0);
        assert_eq!(st.energy.final_level, st.energy.arrivals);
    }

    #[test]
    fn empty_primary_queue_never_retransmits() {
        let s = setup(Scheme::Feedback, mixed_policy(), 0.0, 1.0, 0.8);
        let st = run(&s, SimSemantics::Backlogged, 10_000, 1).unwrap();
        assert_eq!(st.empty_frac_p.mean, 1.0);
        assert_eq!(st.retx_frac.mean, 0.0);
        assert!(st.mu_p.mean.is_nan());
        assert_eq!(st.primary_departures, 0);
    }

    #[test]
    fn short_runs_and_bad_input() {
        let s = setup(Scheme::NoFeedback, mixed_policy(), 0.1, 0.1, 0.5);
        let st = run(&s, SimSemantics::Exact, 5, 1).unwrap();
        assert_eq!(st.slots, 5);
        assert!(run(&s, SimSemantics::Exact, 0, 1).is_err());
    }

    #[test]
    fn detects_drifting_primary_queue() {
        let s = setup(Scheme::NoFeedback, mixed_policy(), 0.9, 1.0, 0.8);
        let st = run(&s, SimSemantics::Backlogged, 200_000, 2).unwrap();
        assert!(st.primary_drifts());
        let ok = setup(Scheme::NoFeedback, mixed_policy(), 0.1, 1.0, 0.8);
        assert!(!run(&ok, SimSemantics::Backlogged, 200_000, 2)
            .unwrap()
            .primary_drifts());
    }
}
