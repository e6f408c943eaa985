//! Analysis, optimization and simulation of an energy-harvesting secondary
//! user that shares a slotted channel with a primary user.
//!
//! The secondary may sense the channel for part of the slot before deciding
//! to access it, access directly without sensing, or (with the feedback
//! scheme) exploit an overheard primary NACK to transmit blindly in the
//! retransmission slot. The crate provides
//!
//! - [`outage`]: Rayleigh-fading success probabilities for solo and
//!   concurrent transmissions,
//! - [`analytic`]: closed-form service rates, queue distributions and delays,
//! - [`optimizer`]: the constrained throughput maximization and a grid oracle,
//! - [`sim`]: an exact slot-level Monte Carlo of the interacting queues,
//! - [`validate`]: simulation-versus-analysis checks,
//! - [`config`] and [`sweep`]: the run configuration and CSV sweeps behind the CLI.

pub mod analytic;
pub mod config;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod outage;
pub mod sim;
pub mod sweep;
pub mod validate;

pub use error::{Error, Result};
pub use model::{PolicyFb, PolicyNoFb, Scheme, SensingQuality, TrafficParams};
pub use outage::{OutageProfile, PowerMode};
