//! Discrete-event simulator of a single-switch rack running PL2, a
//! switch-assisted reservation scheme for bounded in-rack latency, next to
//! raw Ethernet and a receiver-driven (Homa-like) baseline.
//!
//! Start with [`config::RunConfig`] or [`presets`], run scenarios with
//! [`runner::run`], [`network::simulate`] or [`sweep::sweep`], and read [`metrics::ScenarioReport`].

pub mod baselines;
pub mod config;
pub mod error;
pub mod host;
pub mod ids;
pub mod metrics;
pub mod network;
pub mod presets;
pub mod runner;
pub mod sim;
pub mod sweep;
pub mod switch;
pub mod workload;

pub use config::{NetConfig, RunConfig};
pub use error::{Result, SimError};
pub use metrics::{RunReport, ScenarioReport};
pub use network::{simulate, Simulation, TraceEvent};
pub use runner::run;
pub use sim::SimTime;
pub use sweep::{sweep, SweepTable};
