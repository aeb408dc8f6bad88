//! Ready-made runs. Each preset is an ordinary [`RunConfig`] and can be
//! written out with [`RunConfig::to_toml_string`] as a starting point for a
//! config file.

use crate::config::{RunConfig, ScenarioConfig, SizeSpec, TrafficSpec};
use crate::workload::{Pattern, Protocol};

/// Names accepted by [`preset`].
pub const NAMES: [&str; 7] = [
    "microburst",
    "persistent-incast",
    "persistent-outcast",
    "single-flow",
    "w-trace-incast",
    "shuffle",
    "t-sweep",
];

/// Per-sender load of the microburst run.
pub const MICROBURST_LOAD_GBPS: f64 = 18.0;

const MICROBURST_PEAK_GBPS: f64 = 45.0;
const MICROBURST_ON_US: f64 = 15.0;

/// Message size used by the persistent and microburst runs: four full
/// frames.
pub const FOUR_FRAMES: u64 = 6000;

pub fn preset(name: &str) -> Option<RunConfig> {
    let scenarios = match name {
        "microburst" => microburst(1000.0, &Protocol::ALL),
        "persistent-incast" => persistent_incast(&[2, 3, 4], 200.0),
        "persistent-outcast" => persistent_outcast(100.0),
        "single-flow" => vec![ScenarioConfig {
            name: "single-flow-pl2".into(),
            protocol: Protocol::Pl2,
            pattern: Pattern::Custom {
                pairs: vec![(0, 1)],
            },
            traffic: TrafficSpec::Backlogged,
            size: SizeSpec::Fixed { bytes: FOUR_FRAMES },
            load_gbps: 100.0,
            flows_per_host: 12,
            duration_ms: 20.0,
        }],
        "w-trace-incast" => w_trace_incast(10.0, 20.0),
        "shuffle" => shuffle(),
        "t-sweep" => microburst(100.0, &[Protocol::Pl2]),
        _ => return None,
    };
    Some(RunConfig {
        scenarios,
        ..RunConfig::default()
    })
}

/// 5-way incast of on/off traffic at 18 Gbps per sender: 90% of the
/// receiver's link on average, with bursts at 45 Gbps per sender that
/// overload it for tens of microseconds.
pub fn microburst(duration_ms: f64, protocols: &[Protocol]) -> Vec<ScenarioConfig> {
    protocols
        .iter()
        .map(|&p| ScenarioConfig {
            name: format!("microburst-{p}"),
            protocol: p,
            pattern: Pattern::Incast { senders: 5 },
            traffic: TrafficSpec::OnOff {
                peak_gbps: MICROBURST_PEAK_GBPS,
                mean_on_us: MICROBURST_ON_US,
            },
            size: SizeSpec::Fixed { bytes: FOUR_FRAMES },
            load_gbps: MICROBURST_LOAD_GBPS,
            flows_per_host: 11,
            duration_ms,
        })
        .collect()
}

/// Backlogged n-way incast, 12 flows per sender.
pub fn persistent_incast(senders: &[u16], duration_ms: f64) -> Vec<ScenarioConfig> {
    let mut v = Vec::new();
    for &n in senders {
        for p in Protocol::ALL {
            v.push(ScenarioConfig {
                name: format!("incast{n}-{p}"),
                protocol: p,
                pattern: Pattern::Incast { senders: n },
                traffic: TrafficSpec::Backlogged,
                size: SizeSpec::Fixed { bytes: FOUR_FRAMES },
                load_gbps: 100.0,
                flows_per_host: 12,
                duration_ms,
            });
        }
    }
    v
}

/// One backlogged sender spreading 12 flows over 4 receivers.
pub fn persistent_outcast(duration_ms: f64) -> Vec<ScenarioConfig> {
    Protocol::ALL
        .iter()
        .map(|&p| ScenarioConfig {
            name: format!("outcast4-{p}"),
            protocol: p,
            pattern: Pattern::Outcast { receivers: 4 },
            traffic: TrafficSpec::Backlogged,
            size: SizeSpec::Fixed { bytes: FOUR_FRAMES },
            load_gbps: 100.0,
            flows_per_host: 12,
            duration_ms,
        })
        .collect()
}

/// 3-way incast of Poisson traffic drawn from each bundled workload.
pub fn w_trace_incast(load_gbps: f64, duration_ms: f64) -> Vec<ScenarioConfig> {
    let mut v = Vec::new();
    for w in ["w1", "w2", "w3", "w4", "w5"] {
        for p in [Protocol::Pl2, Protocol::Rds] {
            v.push(ScenarioConfig {
                name: format!("{w}-incast3-{p}"),
                protocol: p,
                pattern: Pattern::Incast { senders: 3 },
                traffic: TrafficSpec::Poisson,
                size: SizeSpec::Builtin { name: w.into() },
                load_gbps,
                flows_per_host: 11,
                duration_ms,
            });
        }
    }
    v
}

/// Four workers and two parameter servers exchanging a 500 MiB model
/// split over the VGG16 layers.
pub fn shuffle() -> Vec<ScenarioConfig> {
    [Protocol::Pl2, Protocol::Rds]
        .iter()
        .map(|&p| ScenarioConfig {
            name: format!("shuffle-{p}"),
            protocol: p,
            pattern: Pattern::Shuffle {
                workers: 4,
                servers: 2,
                model_bytes: 500 << 20,
                iterations: 1,
                iteration_period_ns: 400_000_000,
            },
            traffic: TrafficSpec::Poisson,
            size: SizeSpec::Fixed { bytes: FOUR_FRAMES },
            load_gbps: 100.0,
            flows_per_host: 11,
            duration_ms: 400.0,
        })
        .collect()
}
