use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::percentile::LatencySummary;
use crate::error::{Result, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format `{other}` (csv or json)")),
        }
    }
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropCounts {
    pub buffer_overrun: u64,
    /// Overruns that hit packets sent unsolicited; included in `buffer_overrun`.
    pub buffer_overrun_unsolicited: u64,
    pub unsolicited_threshold: u64,
}

/// Online checks evaluated during the run. All zero in a healthy run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantCounters {
    pub audit_checks: u64,
    pub conservation_violations: u64,
    pub rmw_violations: u64,
    pub monotonicity_violations: u64,
    pub latency_floor_violations: u64,
    pub closure_mismatch: i64,
    pub max_outstanding_rsv: u32,
    pub rds_max_outstanding_grants: u32,
}

/// Optional time series.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub queue_bucket_ns: u64,
    /// `(bucket_start_ns, max depth of any output queue in the bucket)`,
    /// listed only for buckets in which some queue changed.
    pub queue_depth: Vec<(u64, u64)>,
    pub drop_bucket_ns: u64,
    /// Drops of either cause per bucket, from time zero.
    pub drops: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub protocol: String,
    pub pattern: String,
    pub seed: u64,
    pub duration_ns: u64,
    pub messages_generated: u64,
    pub messages_completed: u64,
    pub latency: LatencySummary,
    /// Unique data bytes delivered within the duration, bits/s.
    pub goodput_bps: f64,
    /// All data bytes reaching receivers (duplicates included), bits/s.
    pub throughput_bps: f64,
    /// Goodput broken down by sending host, in host order.
    pub sender_goodput_bps: Vec<f64>,
    pub packets_generated: u64,
    pub packets_delivered: u64,
    pub packets_in_flight: u64,
    pub drops: DropCounts,
    pub duplicates: u64,
    /// Dropped data packets over generated data packets.
    pub drop_rate: f64,
    pub max_queue_bytes: u64,
    /// Time-averaged depth of the busiest output queue.
    pub mean_queue_bytes: f64,
    pub control_bytes: u64,
    pub data_bytes: u64,
    /// control / (control + data).
    pub overhead_fraction: f64,
    /// control / data.
    pub control_per_data: f64,
    pub bursts: u64,
    pub unsolicited_bursts: u64,
    pub resent_bursts: u64,
    pub rds_sender_timeouts: u64,
    pub rds_receiver_timeouts: u64,
    pub rds_loss_signals: u64,
    pub events: u64,
    pub final_time_ns: u64,
    pub invariants: InvariantCounters,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub series: Option<Series>,
}

/// CSV columns, in order. One row per scenario.
pub const CSV_HEADER: [&str; 38] = [
    "name",
    "protocol",
    "pattern",
    "seed",
    "duration_ns",
    "messages_generated",
    "messages_completed",
    "latency_count",
    "latency_p50_ns",
    "latency_p99_ns",
    "latency_p999_ns",
    "latency_max_ns",
    "latency_mean_ns",
    "goodput_bps",
    "throughput_bps",
    "sender_goodput_min_bps",
    "sender_goodput_max_bps",
    "packets_generated",
    "packets_delivered",
    "packets_in_flight",
    "drops_buffer_overrun",
    "drops_buffer_overrun_unsolicited",
    "drops_unsolicited",
    "duplicates",
    "drop_rate",
    "max_queue_bytes",
    "mean_queue_bytes",
    "control_bytes",
    "data_bytes",
    "overhead_fraction",
    "control_per_data",
    "bursts",
    "unsolicited_bursts",
    "resent_bursts",
    "rds_sender_timeouts",
    "rds_receiver_timeouts",
    "rds_loss_signals",
    "events",
];

impl ScenarioReport {
    pub fn csv_record(&self) -> Vec<String> {
        let min = self
            .sender_goodput_bps
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let max = self.sender_goodput_bps.iter().copied().fold(0.0, f64::max);
        let min = if min.is_finite() { min } else { 0.0 };
        let l = &self.latency;
        vec![
            self.name.clone(),
            self.protocol.clone(),
            self.pattern.clone(),
            self.seed.to_string(),
            self.duration_ns.to_string(),
            self.messages_generated.to_string(),
            self.messages_completed.to_string(),
            l.count.to_string(),
            l.p50_ns.to_string(),
            l.p99_ns.to_string(),
            l.p999_ns.to_string(),
            l.max_ns.to_string(),
            l.mean_ns.to_string(),
            self.goodput_bps.to_string(),
            self.throughput_bps.to_string(),
            min.to_string(),
            max.to_string(),
            self.packets_generated.to_string(),
            self.packets_delivered.to_string(),
            self.packets_in_flight.to_string(),
            self.drops.buffer_overrun.to_string(),
            self.drops.buffer_overrun_unsolicited.to_string(),
            self.drops.unsolicited_threshold.to_string(),
            self.duplicates.to_string(),
            self.drop_rate.to_string(),
            self.max_queue_bytes.to_string(),
            self.mean_queue_bytes.to_string(),
            self.control_bytes.to_string(),
            self.data_bytes.to_string(),
            self.overhead_fraction.to_string(),
            self.control_per_data.to_string(),
            self.bursts.to_string(),
            self.unsolicited_bursts.to_string(),
            self.resent_bursts.to_string(),
            self.rds_sender_timeouts.to_string(),
            self.rds_receiver_timeouts.to_string(),
            self.rds_loss_signals.to_string(),
            self.events.to_string(),
        ]
    }

    /// Overruns of packets that were sent on a granted schedule.
    pub fn solicited_overruns(&self) -> u64 {
        self.drops.buffer_overrun - self.drops.buffer_overrun_unsolicited
    }

    pub fn total_drops(&self) -> u64 {
        self.drops.buffer_overrun + self.drops.unsolicited_threshold
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub scenarios: Vec<ScenarioReport>,
}

impl RunReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioReport> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for s in &self.scenarios {
            w.write_record(s.csv_record())?;
        }
        let bytes = w.into_inner().map_err(|e| SimError::Parse {
            path: "<csv>".into(),
            message: e.to_string(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

/// Writes `report` to `path`. Identical reports give identical bytes.
pub fn emit(report: &RunReport, format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &report.render(format)?)
}

/// Writes each scenario's time series as `<dir>/<name>.queue.csv` and
/// `<dir>/<name>.drops.csv`. Scenarios without series are skipped.
pub fn emit_series(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for s in &report.scenarios {
        let Some(series) = &s.series else { continue };
        let q = dir.join(format!("{}.queue.csv", s.name));
        let mut text = String::from("bucket_start_ns,max_queue_bytes\n");
        for (t, d) in &series.queue_depth {
            text.push_str(&format!("{t},{d}\n"));
        }
        write_text(&q, &text)?;
        written.push(q);

        let d = dir.join(format!("{}.drops.csv", s.name));
        let mut text = String::from("bucket_start_ns,drops\n");
        for (i, n) in series.drops.iter().enumerate() {
            text.push_str(&format!("{},{n}\n", i as u64 * series.drop_bucket_ns));
        }
        write_text(&d, &text)?;
        written.push(d);
    }
    Ok(written)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
    f.write_all(text.as_bytes())
        .map_err(|e| SimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            seed: 3,
            scenarios: vec![ScenarioReport {
                name: "a".into(),
                protocol: "pl2".into(),
                sender_goodput_bps: vec![1.0, 2.5],
                ..Default::default()
            }],
        }
    }

    #[test]
    fn csv_header_is_stable() {
        let csv = sample().to_csv().unwrap();
        let first = csv.lines().next().unwrap();
        assert_eq!(first, CSV_HEADER.join(","));
        assert_eq!(
            csv.lines().nth(1).unwrap().split(',').count(),
            CSV_HEADER.len()
        );
    }

    #[test]
    fn identical_reports_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
        emit(&sample(), OutputFormat::Json, &a).unwrap();
        emit(&sample(), OutputFormat::Json, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        let back: RunReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn bad_path_names_the_path() {
        let e = emit(&sample(), OutputFormat::Csv, "/nonexistent/dir/x.csv").unwrap_err();
        assert!(e.to_string().contains("/nonexistent/dir/x.csv"));
    }
}
