//! One-parameter sweeps over a run config.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, SimError};
use crate::metrics::{OutputFormat, RunReport, CSV_HEADER};
use crate::runner::run;
use crate::sim::derive_seed;
use crate::workload::Pattern;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    /// Burst size.
    #[serde(rename = "K")]
    K,
    /// Host threshold for unsolicited sends.
    #[serde(rename = "t")]
    SmallT,
    /// Switch threshold for admitting unsolicited bursts.
    #[serde(rename = "T")]
    BigT,
    /// Per-sender load in Gbps, applied to every scenario.
    #[serde(rename = "load")]
    Load,
    /// Incast senders, outcast receivers or shuffle workers.
    #[serde(rename = "senders")]
    Senders,
}

impl std::str::FromStr for SweepParam {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "K" | "k" => SweepParam::K,
            "t" => SweepParam::SmallT,
            "T" => SweepParam::BigT,
            "load" => SweepParam::Load,
            "senders" => SweepParam::Senders,
            other => return Err(SimError::UnknownParameter(other.to_string())),
        })
    }
}

impl std::fmt::Display for SweepParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepParam::K => "K",
            SweepParam::SmallT => "t",
            SweepParam::BigT => "T",
            SweepParam::Load => "load",
            SweepParam::Senders => "senders",
        })
    }
}

impl SweepParam {
    /// `template` with this parameter set to `value`.
    pub fn apply(self, template: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = template.clone();
        let whole = || -> Result<u32> {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u32)
            } else {
                Err(SimError::Parse {
                    path: format!("sweep {self}"),
                    message: format!("{value} is not a whole number"),
                })
            }
        };
        match self {
            SweepParam::K => c.pl2.k = whole()?,
            SweepParam::SmallT => c.pl2.t = whole()?,
            SweepParam::BigT => c.switch.unsolicited_threshold = whole()?,
            SweepParam::Load => {
                for s in &mut c.scenarios {
                    s.load_gbps = value;
                }
            }
            SweepParam::Senders => {
                let n = whole()?.min(u16::MAX as u32) as u16;
                for s in &mut c.scenarios {
                    match &mut s.pattern {
                        Pattern::Incast { senders } => *senders = n,
                        Pattern::Outcast { receivers } => *receivers = n,
                        Pattern::Shuffle { workers, .. } => *workers = n,
                        Pattern::Rpc { .. } | Pattern::Custom { .. } => {}
                    }
                }
                let need = c
                    .scenarios
                    .iter()
                    .map(|s| s.pattern.hosts_needed())
                    .max()
                    .unwrap_or(0);
                c.topology.hosts = c.topology.hosts.max(need);
            }
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub replicate: u32,
    pub seed: u64,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub parameter: SweepParam,
    pub base_seed: u64,
    pub points: Vec<SweepPoint>,
}

/// Runs `template` once per value and replicate. Every run gets its own
/// seed derived from `template.seed`.
pub fn sweep(
    template: &RunConfig,
    parameter: &str,
    values: &[f64],
    replicates: u32,
) -> Result<SweepTable> {
    let param: SweepParam = parameter.parse()?;
    if values.is_empty() || replicates == 0 {
        return Err(SimError::EmptySweep);
    }
    let mut jobs = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        let cfg = param.apply(template, v)?;
        cfg.validate()?;
        for r in 0..replicates {
            let seed = derive_seed(template.seed, (i as u64) << 32 | r as u64);
            let mut c = cfg.clone();
            c.seed = seed;
            jobs.push((v, r, c));
        }
    }
    let points = jobs
        .into_par_iter()
        .map(|(value, replicate, c)| {
            Ok(SweepPoint {
                value,
                replicate,
                seed: c.seed,
                report: run(&c)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable {
        parameter: param,
        base_seed: template.seed,
        points,
    })
}

impl SweepTable {
    /// One row per point and scenario: `parameter,value,replicate` followed
    /// by the usual report columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["parameter", "value", "replicate"];
        header.extend(CSV_HEADER);
        w.write_record(&header)?;
        for p in &self.points {
            for s in &p.report.scenarios {
                let mut row = vec![
                    self.parameter.to_string(),
                    p.value.to_string(),
                    p.replicate.to_string(),
                ];
                row.extend(s.csv_record());
                w.write_record(&row)?;
            }
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
            OutputFormat::Json => Ok(serde_json::to_string_pretty(self)?),
        }
    }

    /// Points for one swept value, in replicate order.
    pub fn at(&self, value: f64) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(move |p| p.value == value)
    }
}
