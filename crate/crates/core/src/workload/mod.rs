//! Traffic generation: message sizes, arrival processes and the scenario
//! patterns built from them.

pub mod arrival;
pub mod cdf;
pub mod dist;
pub mod scenario;

pub use arrival::{ArrivalGen, ArrivalProcess};
pub use cdf::{builtin_cdf, builtin_names, load_cdf, parse_cdf};
pub use dist::{EmpiricalCdf, MessageSizeDist};
pub use scenario::{
    vgg16_layer_bytes, FixedMessage, FlowSpec, MessageTag, Pattern, Protocol, ReplyRule, Scenario,
    SourceSpec, Traffic, TrafficPlan,
};

use crate::sim::RngStream;

/// Draws one message size.
pub fn sample_message(dist: &MessageSizeDist, rng: &mut RngStream) -> u64 {
    dist.sample(rng)
}
