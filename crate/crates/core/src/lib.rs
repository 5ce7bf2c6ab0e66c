//! Deterministic, seedable multi-agent simulator for UAV medical-supply
//! delivery on a city grid.
//!
//! The crate is organized around one transition function
//! ([`dynamics::step`]) that produces an audited event list. Rewards,
//! counters and traces are all derived from those events.
//!
//! ```no_run
//! use uavmed_core::{episode::run_episode, policies::GreedyPolicy, scenario::ScenarioConfig};
//!
//! let cfg = ScenarioConfig::brussels();
//! let result = run_episode(&cfg, 7, &mut GreedyPolicy).unwrap();
//! println!("{} s, success = {}", result.mission_time_s, result.success);
//! ```

pub mod batch;
pub mod dynamics;
pub mod env_api;
pub mod episode;
pub mod error;
pub mod observation;
pub mod policies;
pub mod reward;
pub mod scenario;
pub mod summary;
pub mod trace;
pub mod world;

pub use error::{Error, Result};
