//! Dynamic bike-sharing rebalancing.
//!
//! The pipeline has four phases:
//!
//! 1. [`ingest`] cleans trip logs, selects the busiest stations and derives an
//!    hourly net-flow profile.
//! 2. [`agent`] trains a deep Q-network inside the hourly simulator in [`env`]
//!    and rolls out a greedy 24-hour strategy.
//! 3. [`planner`] turns the strategy into capacity-constrained multi-leg truck
//!    journeys with just-in-time dispatch times.
//! 4. [`report`] renders dispatch tickets (optionally through a language-model
//!    endpoint, with a grounding check and deterministic fallback), while
//!    [`metrics`] scores each seeded run and aggregates across seeds.
//!
//! [`pipeline`] wires the phases together with file-based artifacts.

pub mod agent;
pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod report;
pub mod synth;

pub use config::Config;
pub use domain::{decode_action, encode_action, need, Action, NetworkState, Station, StationRegistry};
pub use env::{EpisodeLog, RewardConfig, RebalanceEnv, StepOutcome};
pub use error::{Error, Result};
pub use planner::{Journey, JourneyPlan, TransferTask};
