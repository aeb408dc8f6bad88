//! One sender spreads 12 backlogged flows over four receivers. The sender's
//! uplink is the bottleneck, so the interesting number is how close each
//! transport gets to line rate.
//!
//! cargo run --release --example outcast

use pl2sim::presets;

fn main() -> pl2sim::Result<()> {
    let mut cfg = presets::preset("persistent-outcast").unwrap();
    cfg.scenarios = presets::persistent_outcast(10.0);
    for s in pl2sim::run(&cfg)?.scenarios {
        println!(
            "{:<14} goodput {:>6.2} Gbps  control/data {:.4}  p99 {:>8.1} us",
            s.name,
            s.goodput_bps / 1e9,
            s.control_per_data,
            s.latency.p99_ns as f64 / 1e3
        );
    }
    Ok(())
}
