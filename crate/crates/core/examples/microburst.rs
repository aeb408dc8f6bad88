//! Five senders burst at 45 Gbps each into one receiver, 18 Gbps on average.
//! Prints drops, tail latency and the deepest queue for each transport.
//!
//! cargo run --release --example microburst [duration_ms]

use pl2sim::presets;
use pl2sim::workload::Protocol;

fn main() -> pl2sim::Result<()> {
    let ms: f64 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(50.0);
    let mut cfg = presets::preset("microburst").unwrap();
    cfg.scenarios = presets::microburst(ms, &Protocol::ALL);

    let report = pl2sim::run(&cfg)?;
    println!(
        "{:<16} {:>10} {:>9} {:>10} {:>11} {:>10}",
        "scenario", "drop rate", "p50 us", "p99 us", "p99.9 us", "max queue"
    );
    for s in &report.scenarios {
        println!(
            "{:<16} {:>9.4}% {:>9.1} {:>10.1} {:>11.1} {:>10}",
            s.name,
            s.drop_rate * 100.0,
            s.latency.p50_ns as f64 / 1e3,
            s.latency.p99_ns as f64 / 1e3,
            s.latency.p999_ns as f64 / 1e3,
            s.max_queue_bytes
        );
    }
    Ok(())
}
