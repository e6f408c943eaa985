//! Success (complement-of-outage) probabilities over Rayleigh block fading.
//!
//! A transmission that starts at the beginning of the slot has the whole slot
//! `T` available; a transmission that follows a sensing phase of length `tau`
//! only has `T - tau` and must therefore use the higher rate
//! `r = b / (T - tau)`. With an exponentially distributed channel gain of mean
//! `fading_mean`, decoding succeeds with probability
//!
//! ```text
//! P = exp(-(2^(r/W) - 1) / (snr * fading_mean))
//! ```
//!
//! and with an independent Rayleigh interferer of mean received SNR
//! `snr_v * fading_mean_v` the solo value is divided by
//! `1 + (2^(r/W) - 1) * snr_v * fading_mean_v / (snr * fading_mean)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, check_prob, Error, Result};

/// When a transmission starts inside the slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxStart {
    /// Transmission occupies the whole slot (`i = 0`).
    FullSlot,
    /// Transmission follows a sensing phase of length `tau` (`i = 1`).
    AfterSensing,
}

impl TxStart {
    pub fn index(self) -> u8 {
        match self {
            TxStart::FullSlot => 0,
            TxStart::AfterSensing => 1,
        }
    }
}

/// How the transmitter budgets a shortened transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Same transmit power in both phases; the received SNR is unchanged.
    FixedPower,
    /// One energy unit per slot whatever the duration, so a transmission of
    /// length `x * T` runs at power scaled by `1 / x`.
    #[default]
    FixedEnergy,
}

/// Physical parameters of one transmitter to receiver link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    /// Packet size in bits.
    pub bits_per_packet: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Sensing duration in seconds, `0 <= tau < T`.
    pub sensing_duration: f64,
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Received SNR at unit channel gain for a full-slot transmission.
    pub mean_snr: f64,
    /// Mean of the exponential channel gain.
    pub fading_mean: f64,
}

impl LinkBudget {
    pub fn new(
        bits_per_packet: f64,
        slot_duration: f64,
        sensing_duration: f64,
        bandwidth: f64,
        mean_snr: f64,
        fading_mean: f64,
    ) -> Result<Self> {
        let link = LinkBudget {
            bits_per_packet,
            slot_duration,
            sensing_duration,
            bandwidth,
            mean_snr,
            fading_mean,
        };
        link.validate()?;
        Ok(link)
    }

    /// Checks the type invariants. `bits_per_packet = 0` is accepted as the
    /// degenerate zero-rate link.
    pub fn validate(&self) -> Result<()> {
        if !(self.bits_per_packet.is_finite() && self.bits_per_packet >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "bits_per_packet",
                value: self.bits_per_packet,
                reason: "must be finite and >= 0",
            });
        }
        check_positive("slot_duration", self.slot_duration)?;
        check_positive("bandwidth", self.bandwidth)?;
        check_positive("mean_snr", self.mean_snr)?;
        check_positive("fading_mean", self.fading_mean)?;
        let tau = self.sensing_duration;
        if !(tau.is_finite() && tau >= 0.0 && tau < self.slot_duration) {
            return Err(Error::InvalidParameter {
                name: "sensing_duration",
                value: tau,
                reason: "must satisfy 0 <= tau < slot_duration",
            });
        }
        Ok(())
    }

    /// Fraction of the slot available for data, `x = 1 - i * tau / T`.
    pub fn airtime_fraction(&self, start: TxStart) -> f64 {
        match start {
            TxStart::FullSlot => 1.0,
            TxStart::AfterSensing => 1.0 - self.sensing_duration / self.slot_duration,
        }
    }

    /// Mean received SNR (`snr * fading_mean`) seen by a transmission with
    /// the given start under the given power mode.
    pub fn effective_snr(&self, start: TxStart, mode: PowerMode) -> f64 {
        let base = self.mean_snr * self.fading_mean;
        match mode {
            PowerMode::FixedPower => base,
            PowerMode::FixedEnergy => base / self.airtime_fraction(start),
        }
    }

    /// Spectral-efficiency scale `a = b ln 2 / (T W)`; the SINR threshold is
    /// `exp(a / x) - 1`.
    fn rate_exponent(&self) -> f64 {
        self.bits_per_packet * std::f64::consts::LN_2 / (self.slot_duration * self.bandwidth)
    }

    /// SINR threshold `2^(r_i / W) - 1`.
    pub fn sinr_threshold(&self, start: TxStart) -> f64 {
        (self.rate_exponent() / self.airtime_fraction(start)).exp_m1()
    }
}

/// Transmission rate `r_i = b / (T (1 - i tau / T))` in bits per second.
pub fn transmission_rate(link: &LinkBudget, start: TxStart) -> f64 {
    link.bits_per_packet / (link.slot_duration * link.airtime_fraction(start))
}

/// Shape of the fixed-energy outage exponent, `g(x) = x (exp(a / x) - 1)`.
///
/// Strictly decreasing on `(0, 1]` for `a > 0`, which is what makes a
/// post-sensing transmission less reliable than a full-slot one.
pub fn fixed_energy_exponent(a: f64, x: f64) -> f64 {
    x * (a / x).exp_m1()
}

/// Probability of correct reception without interference.
pub fn success_prob_solo(link: &LinkBudget, start: TxStart, mode: PowerMode) -> f64 {
    let threshold = link.sinr_threshold(start);
    (-threshold / link.effective_snr(start, mode)).exp()
}

/// Probability of correct reception with a concurrent Rayleigh interferer
/// whose mean received SNR at this receiver is `interferer_snr`
/// (`snr_v * fading_mean_v`).
pub fn success_prob_concurrent(
    link: &LinkBudget,
    interferer_snr: f64,
    start: TxStart,
    mode: PowerMode,
) -> f64 {
    let threshold = link.sinr_threshold(start);
    let own = link.effective_snr(start, mode);
    let solo = (-threshold / own).exp();
    if interferer_snr.is_infinite() {
        return 0.0;
    }
    solo / (1.0 + threshold * interferer_snr / own)
}

/// Mean interference SNRs across the two links.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CrossSnr {
    /// Secondary transmitter as seen at the primary receiver.
    pub secondary_at_primary_rx: f64,
    /// Primary transmitter as seen at the secondary receiver.
    pub primary_at_secondary_rx: f64,
}

/// The six success probabilities that drive every service rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageProfile {
    /// Primary success with a silent secondary.
    pub primary: f64,
    /// Primary success with a concurrent secondary transmission.
    pub primary_conc: f64,
    /// Secondary full-slot success, primary silent.
    pub sec_full: f64,
    /// Secondary post-sensing success, primary silent.
    pub sec_sensed: f64,
    /// Secondary full-slot success, primary active.
    pub sec_full_conc: f64,
    /// Secondary post-sensing success, primary active.
    pub sec_sensed_conc: f64,
}

impl OutageProfile {
    /// Builds a profile from the six probabilities directly and checks the
    /// ordering invariants.
    pub fn from_probabilities(
        primary: f64,
        primary_conc: f64,
        sec_full: f64,
        sec_sensed: f64,
        sec_full_conc: f64,
        sec_sensed_conc: f64,
    ) -> Result<Self> {
        let profile = OutageProfile {
            primary: check_prob("primary", primary)?,
            primary_conc: check_prob("primary_conc", primary_conc)?,
            sec_full: check_prob("sec_full", sec_full)?,
            sec_sensed: check_prob("sec_sensed", sec_sensed)?,
            sec_full_conc: check_prob("sec_full_conc", sec_full_conc)?,
            sec_sensed_conc: check_prob("sec_sensed_conc", sec_sensed_conc)?,
        };
        profile.check_ordering()?;
        Ok(profile)
    }

    /// Builds a profile from full-slot values and the post-sensing ratios
    /// `delta = sec_sensed / sec_full` and `delta_c = sec_sensed_conc / sec_full_conc`.
    pub fn from_ratios(
        primary: f64,
        primary_conc: f64,
        sec_full: f64,
        sec_full_conc: f64,
        delta: f64,
        delta_c: f64,
    ) -> Result<Self> {
        let delta = check_prob("delta", delta)?;
        let delta_c = check_prob("delta_c", delta_c)?;
        Self::from_probabilities(
            primary,
            primary_conc,
            sec_full,
            delta * sec_full,
            sec_full_conc,
            delta_c * sec_full_conc,
        )
    }

    fn check_ordering(&self) -> Result<()> {
        let pairs = [
            (
                "sec_sensed",
                self.sec_sensed,
                self.sec_full,
                "must not exceed sec_full",
            ),
            (
                "sec_sensed_conc",
                self.sec_sensed_conc,
                self.sec_full_conc,
                "must not exceed sec_full_conc",
            ),
            (
                "primary_conc",
                self.primary_conc,
                self.primary,
                "must not exceed primary",
            ),
            (
                "sec_full_conc",
                self.sec_full_conc,
                self.sec_full,
                "must not exceed sec_full",
            ),
            (
                "sec_sensed_conc",
                self.sec_sensed_conc,
                self.sec_sensed,
                "must not exceed sec_sensed",
            ),
        ];
        for (name, lower, upper, reason) in pairs {
            if lower > upper + crate::error::PROB_TOL {
                return Err(Error::InvalidParameter {
                    name,
                    value: lower,
                    reason,
                });
            }
        }
        Ok(())
    }

    /// Collision channel: every concurrent transmission is lost.
    pub fn without_mpr(&self) -> Self {
        OutageProfile {
            primary_conc: 0.0,
            sec_full_conc: 0.0,
            sec_sensed_conc: 0.0,
            ..*self
        }
    }

    /// `sec_sensed / sec_full`.
    pub fn delta(&self) -> f64 {
        self.sec_sensed / self.sec_full
    }

    /// `sec_sensed_conc / sec_full_conc`.
    pub fn delta_conc(&self) -> f64 {
        self.sec_sensed_conc / self.sec_full_conc
    }

    /// Secondary success probability for the given primary activity and
    /// transmission start.
    pub fn secondary(&self, primary_active: bool, start: TxStart) -> f64 {
        match (primary_active, start) {
            (false, TxStart::FullSlot) => self.sec_full,
            (false, TxStart::AfterSensing) => self.sec_sensed,
            (true, TxStart::FullSlot) => self.sec_full_conc,
            (true, TxStart::AfterSensing) => self.sec_sensed_conc,
        }
    }
}

/// Assembles the profile from link physics. The primary always transmits
/// from the start of the slot.
pub fn build_profile(
    primary: &LinkBudget,
    secondary: &LinkBudget,
    cross: CrossSnr,
    mode: PowerMode,
) -> Result<OutageProfile> {
    primary.validate()?;
    secondary.validate()?;
    let cross_p = check_nonneg("secondary_at_primary_rx", cross.secondary_at_primary_rx)?;
    let cross_s = check_nonneg("primary_at_secondary_rx", cross.primary_at_secondary_rx)?;
    use TxStart::*;
    OutageProfile::from_probabilities(
        success_prob_solo(primary, FullSlot, mode),
        success_prob_concurrent(primary, cross_p, FullSlot, mode),
        success_prob_solo(secondary, FullSlot, mode),
        success_prob_solo(secondary, AfterSensing, mode),
        success_prob_concurrent(secondary, cross_s, FullSlot, mode),
        success_prob_concurrent(secondary, cross_s, AfterSensing, mode),
    )
}

fn check_nonneg(name: &'static str, value: f64) -> Result<f64> {
    if value.is_nan() || value < 0.0 {
        return Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be >= 0",
        });
    }
    Ok(value)
}
