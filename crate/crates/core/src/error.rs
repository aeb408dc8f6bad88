use std::path::PathBuf;

use crate::sim::SimTime;

pub type Result<T, E = SimError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("event scheduled at {at} but the clock already reads {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("zero-byte frame")]
    EmptyFrame,

    #[error("empty message")]
    EmptyMessage,

    #[error("malformed RSV: demand {demand} outside [1, {max}]")]
    MalformedRsv { demand: u32, max: u32 },

    #[error("invalid burst: {0}")]
    InvalidBurst(String),

    #[error("flow {flow} already has an outstanding RSV (burst {burst})")]
    OutstandingRsv { flow: usize, burst: u64 },

    #[error("GRT for unknown burst {0}")]
    UnknownGrt(u64),

    #[error("empty sample set")]
    EmptySamples,

    #[error("percentile {0} outside (0, 100]")]
    BadPercentile(f64),

    #[error("{path}: line {line}: {message}")]
    Cdf {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid message-size distribution: {0}")]
    Distribution(String),

    #[error("invalid configuration:\n{}", format_issues(.0))]
    Config(Vec<crate::config::ValidationIssue>),

    #[error("unknown sweep parameter `{0}` (expected one of K, t, T, load, senders)")]
    UnknownParameter(String),

    #[error("sweep value list is empty")]
    EmptySweep,

    #[error("invariant violated at event #{position} (t={time}): {message}")]
    Invariant {
        position: u64,
        time: SimTime,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_issues(issues: &[crate::config::ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {}: {}", i.field, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

impl SimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }
}
