//! Sweeps the burst size K on a 3-way PL2 incast: larger bursts amortize the
//! RSV/GRT pair over more data. Each value runs with three seeds; the CSV
//! goes to stdout.
//!
//! cargo run --release --example parameter_sweep > sweep.csv

use pl2sim::config::{RunConfig, ScenarioConfig, SizeSpec, TrafficSpec};
use pl2sim::workload::{Pattern, Protocol};

fn main() -> pl2sim::Result<()> {
    let template = RunConfig {
        scenarios: vec![ScenarioConfig {
            name: "incast3-pl2".into(),
            protocol: Protocol::Pl2,
            pattern: Pattern::Incast { senders: 3 },
            traffic: TrafficSpec::Backlogged,
            size: SizeSpec::Fixed { bytes: 6000 },
            load_gbps: 100.0,
            flows_per_host: 12,
            duration_ms: 5.0,
        }],
        ..RunConfig::default()
    };
    let table = pl2sim::sweep(&template, "K", &[1.0, 2.0, 3.0, 4.0], 3)?;
    for k in [1.0, 2.0, 3.0, 4.0] {
        let runs: Vec<_> = table.at(k).map(|p| &p.report.scenarios[0]).collect();
        let n = runs.len() as f64;
        eprintln!(
            "K={k}: goodput {:.2} Gbps, control/data {:.4}",
            runs.iter().map(|s| s.goodput_bps).sum::<f64>() / n / 1e9,
            runs.iter().map(|s| s.control_per_data).sum::<f64>() / n
        );
    }
    print!("{}", table.to_csv()?);
    Ok(())
}
