//! Four workers push gradients to two parameter servers, which send the
//! updated parameters back once every worker's share of a layer is in.
//!
//! cargo run --release --example shuffle

use pl2sim::config::{RunConfig, ScenarioConfig, SizeSpec, TrafficSpec};
use pl2sim::workload::{Pattern, Protocol};

fn main() -> pl2sim::Result<()> {
    let scenario = |p: Protocol| ScenarioConfig {
        name: format!("shuffle-{p}"),
        protocol: p,
        pattern: Pattern::Shuffle {
            workers: 4,
            servers: 2,
            model_bytes: 50 << 20,
            iterations: 2,
            iteration_period_ns: 20_000_000,
        },
        traffic: TrafficSpec::Poisson,
        size: SizeSpec::Fixed { bytes: 6000 },
        load_gbps: 100.0,
        flows_per_host: 11,
        duration_ms: 40.0,
    };
    let cfg = RunConfig {
        scenarios: vec![scenario(Protocol::Pl2), scenario(Protocol::Rds)],
        ..RunConfig::default()
    };
    for s in pl2sim::run(&cfg)?.scenarios {
        println!(
            "{:<13} {} messages  goodput {:>6.2} Gbps  p99 {:>8.1} us  drops {:>5}  max queue {:>7} B",
            s.name,
            s.messages_completed,
            s.goodput_bps / 1e9,
            s.latency.p99_ns as f64 / 1e3,
            s.total_drops(),
            s.max_queue_bytes
        );
    }
    Ok(())
}
