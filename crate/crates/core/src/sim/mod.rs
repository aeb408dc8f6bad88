//! Deterministic discrete-event core: clock, event queue, links, latency
//! distributions and seeded random streams.

mod delay;
mod link;
mod queue;
mod rng;
mod time;

pub use delay::{DelayDist, DelayModel, Z_9999, Z_ONE_IN_A_MILLION};
pub use link::{serialization_delay, LinkClock, LinkModel, PriorityTx};
pub use queue::EventQueue;
pub use rng::{derive_seed, streams, RngStream};
pub use time::SimTime;
