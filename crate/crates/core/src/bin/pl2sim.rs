use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pl2sim::config::{RunConfig, Severity};
use pl2sim::metrics::{OutputFormat, ScenarioReport};
use pl2sim::runner::{run_one, write_outputs};
use pl2sim::{presets, SimError};

#[derive(Parser)]
#[command(
    name = "pl2sim",
    version,
    about = "Single-switch rack simulator: PL2, raw Ethernet and RDS"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every scenario of a config or preset.
    Run {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        out: Output,
        /// Run only this scenario.
        #[arg(long)]
        scenario: Option<String>,
        /// Record queue-depth and drop time series.
        #[arg(long)]
        timeseries: bool,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        #[command(flatten)]
        src: Source,
        #[command(flatten)]
        out: Output,
        /// K, t, T, load or senders.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicates: u32,
    },
    /// Check a config and report every problem found.
    Validate {
        #[command(flatten)]
        src: Source,
        /// Print the fully defaulted config as TOML.
        #[arg(long)]
        print: bool,
    },
}

#[derive(Args)]
struct Source {
    /// TOML run config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in run: microburst, persistent-incast, persistent-outcast,
    /// single-flow, w-trace-incast, shuffle or t-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Output {
    /// Overrides the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// csv or json; overrides the config.
    #[arg(long)]
    format: Option<OutputFormat>,
}

impl Source {
    fn load(&self) -> Result<RunConfig, SimError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(p), _) => RunConfig::load(p)?,
            (None, Some(name)) => presets::preset(name).ok_or_else(|| SimError::Parse {
                path: "--preset".into(),
                message: format!(
                    "unknown preset `{name}` (one of {})",
                    presets::NAMES.join(", ")
                ),
            })?,
            (None, None) => {
                return Err(SimError::Parse {
                    path: "<args>".into(),
                    message: "give --config or --preset".into(),
                })
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

impl Output {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.out_dir {
            cfg.output.dir = d.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = f;
        }
    }
}

fn summary_line(s: &ScenarioReport) -> String {
    format!(
        "{:<24} goodput {:>6.2} Gbps  p50 {:>8.1} us  p99 {:>8.1} us  p99.9 {:>8.1} us  drops {:>7}  max queue {:>8} B",
        s.name,
        s.goodput_bps / 1e9,
        s.latency.p50_ns as f64 / 1e3,
        s.latency.p99_ns as f64 / 1e3,
        s.latency.p999_ns as f64 / 1e3,
        s.total_drops(),
        s.max_queue_bytes,
    )
}

fn exec(cli: Cli) -> Result<(), SimError> {
    match cli.cmd {
        Cmd::Run {
            src,
            out,
            scenario,
            timeseries,
        } => {
            let mut cfg = src.load()?;
            out.apply(&mut cfg);
            cfg.output.timeseries |= timeseries;
            for w in cfg.validate()? {
                eprintln!("{w}");
            }
            let report = match &scenario {
                Some(name) => run_one(&cfg, name)?,
                None => pl2sim::run(&cfg)?,
            };
            for s in &report.scenarios {
                println!("{}", summary_line(s));
            }
            for p in write_outputs(&report, &cfg, &cfg.output.dir)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Cmd::Sweep {
            src,
            out,
            param,
            values,
            replicates,
        } => {
            let mut cfg = src.load()?;
            out.apply(&mut cfg);
            let table = pl2sim::sweep(&cfg, &param, &values, replicates)?;
            for p in &table.points {
                for s in &p.report.scenarios {
                    println!(
                        "{param}={:<8} rep {:<3} {}",
                        p.value,
                        p.replicate,
                        summary_line(s)
                    );
                }
            }
            let dir = &cfg.output.dir;
            std::fs::create_dir_all(dir).map_err(|e| SimError::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = dir.join(format!("sweep-{param}.{}", cfg.output.format.extension()));
            std::fs::write(&path, table.render(cfg.output.format)?).map_err(|e| SimError::Io {
                path: path.clone(),
                source: e,
            })?;
            eprintln!("wrote {}", path.display());
        }
        Cmd::Validate { src, print } => {
            let cfg = src.load()?;
            let issues = cfg.issues();
            for i in &issues {
                eprintln!("{i}");
            }
            if print {
                print!("{}", cfg.to_toml_string());
            }
            if issues.iter().any(|i| i.severity == Severity::Error) {
                return Err(SimError::Config(
                    issues
                        .into_iter()
                        .filter(|i| i.severity == Severity::Error)
                        .collect(),
                ));
            }
            eprintln!("ok: {} scenario(s)", cfg.scenarios.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match exec(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ SimError::Config(_)) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
