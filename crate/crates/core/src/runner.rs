//! Runs every scenario of a config and writes the results.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{RunConfig, ValidationIssue};
use crate::error::{Result, SimError};
use crate::metrics::{emit, emit_series, RunReport};
use crate::network::simulate;

/// Validates `cfg` and runs its scenarios, in parallel, all with
/// `cfg.seed`. Scenarios that differ only in protocol therefore see the same
/// arrivals.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let net = cfg.net_config();
    let scenarios = (0..cfg.scenarios.len())
        .map(|i| cfg.scenario(i))
        .collect::<Result<Vec<_>>>()?;
    let reports = scenarios
        .par_iter()
        .map(|s| simulate(&net, s, cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        seed: cfg.seed,
        scenarios: reports,
    })
}

/// Runs only the scenario called `name`.
pub fn run_one(cfg: &RunConfig, name: &str) -> Result<RunReport> {
    let mut c = cfg.clone();
    c.scenarios.retain(|s| s.name == name);
    if c.scenarios.is_empty() {
        return Err(SimError::Config(vec![ValidationIssue::error(
            "scenario",
            format!("no scenario named `{name}`"),
        )]));
    }
    run(&c)
}

/// Writes `report.<ext>` and any time series into `dir`, creating it.
pub fn write_outputs(report: &RunReport, cfg: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let path = dir.join(format!("report.{}", cfg.output.format.extension()));
    emit(report, cfg.output.format, &path)?;
    let mut written = vec![path];
    written.extend(emit_series(report, dir)?);
    Ok(written)
}
