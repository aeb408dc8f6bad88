//! Writes a run's report as JSON and CSV plus queue-depth and drop time
//! series, then reads the JSON back.
//!
//! cargo run --release --example report_export [out_dir]

use std::path::PathBuf;

use pl2sim::metrics::{OutputFormat, RunReport};
use pl2sim::presets;
use pl2sim::runner::write_outputs;
use pl2sim::workload::Protocol;

fn main() -> pl2sim::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("pl2sim-report"));
    let mut cfg = presets::preset("microburst").unwrap();
    cfg.scenarios = presets::microburst(10.0, &[Protocol::Pl2, Protocol::Rds]);
    cfg.output.timeseries = true;

    let report = pl2sim::run(&cfg)?;
    for format in [OutputFormat::Json, OutputFormat::Csv] {
        cfg.output.format = format;
        for p in write_outputs(&report, &cfg, &dir)? {
            println!("wrote {}", p.display());
        }
    }

    let text = std::fs::read_to_string(dir.join("report.json")).expect("just written");
    let back: RunReport = serde_json::from_str(&text)?;
    assert_eq!(back.scenarios.len(), report.scenarios.len());
    println!("read back {} scenarios", back.scenarios.len());
    Ok(())
}
