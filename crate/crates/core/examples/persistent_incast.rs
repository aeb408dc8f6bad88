//! Backlogged n-way incast. Raw Ethernet splits the port evenly and drops
//! the excess at the switch; PL2 keeps the queue short and loses nothing.
//!
//! cargo run --release --example persistent_incast

use pl2sim::presets;

fn main() -> pl2sim::Result<()> {
    let mut cfg = presets::preset("persistent-incast").unwrap();
    cfg.scenarios = presets::persistent_incast(&[2, 4], 20.0);

    for s in pl2sim::run(&cfg)?.scenarios {
        let per_sender: Vec<String> = s
            .sender_goodput_bps
            .iter()
            .map(|b| format!("{:.1}", b / 1e9))
            .collect();
        println!(
            "{:<14} total {:>6.2} Gbps  per sender [{}]  overruns {:>8}  max queue {:>8} B",
            s.name,
            s.goodput_bps / 1e9,
            per_sender.join(", "),
            s.drops.buffer_overrun,
            s.max_queue_bytes
        );
    }
    Ok(())
}
