//! Percentiles and run reports.

pub mod percentile;
pub mod report;

pub use percentile::{percentile, percentile_sorted, LatencySummary};
pub use report::{
    emit, emit_series, DropCounts, InvariantCounters, OutputFormat, RunReport, ScenarioReport,
    Series, CSV_HEADER,
};
