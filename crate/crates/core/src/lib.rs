//! Downlink millimeter-wave NOMA with user grouping, two-level power
//! allocation and hybrid analog/digital beamforming.
//!
//! The pipeline for one channel realization is:
//!
//! 1. [`channel::generate_channels`] draws multipath channels,
//! 2. [`grouping::group_users`] clusters users into one group per RF chain,
//! 3. [`beamforming::optimize`] searches the analog matrix with a
//!    boundary-compressed particle swarm, where every candidate is scored by
//!    an AZF digital precoder followed by [`power::inter_gpa`],
//! 4. [`metrics`] turns the final allocation into rates, sum rate and
//!    energy efficiency.
//!
//! [`baselines`] holds the OMA and fully digital reference schemes,
//! [`experiment`] the sweep runner behind the CLI, and [`oracles`] brute-force
//! checks for the power allocator.

pub mod baselines;
pub mod beamforming;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod grouping;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod power;
pub mod rng;

pub use config::{PsoConfig, SystemConfig};
pub use error::{Error, Result};
