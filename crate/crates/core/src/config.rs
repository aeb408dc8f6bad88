//! Run configuration and its TOML file format.
//!
//! ```toml
//! seed = 7
//!
//! [topology]
//! hosts = 8
//! link_rate_gbps = 100.0
//! mtu = 1500
//!
//! [pl2]
//! k = 4
//! t = 15
//!
//! [switch]
//! unsolicited_threshold = 60
//!
//! [[scenario]]
//! name = "incast3"
//! protocol = "pl2"
//! pattern = { kind = "incast", senders = 3 }
//! traffic = { kind = "poisson" }
//! size = { kind = "builtin", name = "w3" }
//! load_gbps = 23.0
//! duration_ms = 10.0
//! ```
//!
//! Every key is optional except the scenario list; defaults follow the
//! 100 Gbps, 1500 B MTU, K = 4, t = 15 prototype. Command-line flags
//! (`--seed`, `--out-dir`, `--format`) take precedence over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::RdsConfig;
use crate::error::{Result, SimError};
use crate::host::{RecencyWindow, SchedulerParams};
use crate::metrics::OutputFormat;
use crate::sim::{DelayDist, DelayModel, SimTime, Z_9999, Z_ONE_IN_A_MILLION};
use crate::switch::{RegisterStage, Settlement, SwitchConfig};
use crate::workload::{
    builtin_cdf, load_cdf, MessageSizeDist, Pattern, Protocol, Scenario, Traffic,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
    pub severity: Severity,
}

impl ValidationIssue {
    pub fn error(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            field: field.into(),
            message: message.into(),
            severity: Severity::Error,
        }
    }

    pub fn warning(field: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationIssue {
            field: field.into(),
            message: message.into(),
            severity: Severity::Warning,
        }
    }
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}: {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Hosts attached to the switch, one per port.
    pub hosts: u32,
    pub link_rate_gbps: f64,
    pub mtu: u32,
    pub propagation_ns: u64,
    /// NIC clocks are offset by up to this many ppm from nominal.
    pub clock_ppm: u32,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            hosts: 8,
            link_rate_gbps: 100.0,
            mtu: 1500,
            propagation_ns: 5,
            clock_ppm: 100,
        }
    }
}

/// Granularity of PL2 scheduling state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowStateScope {
    /// One state per sender thread and destination.
    #[default]
    Thread,
    /// One state per destination shared by all threads of a host.
    Destination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pl2Config {
    pub k: u32,
    pub t: u32,
    /// Recency window as a multiple of the running-median exchange delay.
    pub recency_multiple: u32,
    /// Fixed recency window; overrides `recency_multiple` when set.
    pub recency_window_ns: Option<u64>,
    /// Issue a segment's RSV as soon as the previous GRT arrives instead of
    /// after the previous burst is handed to the NIC.
    pub pipeline_segments: bool,
    pub flow_state: FlowStateScope,
}

impl Default for Pl2Config {
    fn default() -> Self {
        Pl2Config {
            k: 4,
            t: 15,
            recency_multiple: 2,
            recency_window_ns: None,
            pipeline_segments: false,
            flow_state: FlowStateScope::Thread,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchFileConfig {
    /// T, in timeslots.
    pub unsolicited_threshold: u32,
    pub output_queue_bytes: u64,
    pub shared_buffer_bytes: u64,
    /// `"once"` or `"per_copy"`.
    pub settlement: Settlement,
    /// `"egress"` or `"ingress"`.
    pub register_stage: RegisterStage,
}

impl Default for SwitchFileConfig {
    fn default() -> Self {
        let d = SwitchConfig::default();
        SwitchFileConfig {
            unsolicited_threshold: d.unsolicited_threshold,
            output_queue_bytes: d.output_queue_capacity,
            shared_buffer_bytes: d.shared_buffer_capacity,
            settlement: d.settlement,
            register_stage: d.register_stage,
        }
    }
}

/// Delay distribution as written in the file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelaySpec {
    Constant {
        ns: u64,
    },
    /// Shifted lognormal through min and median, clamped at max; `max` sits
    /// at the standard-normal quantile `tail_z`.
    Anchored {
        min_ns: u64,
        median_ns: u64,
        max_ns: u64,
        tail_z: Option<f64>,
    },
}

impl DelaySpec {
    fn resolve(&self, default_z: f64) -> DelayDist {
        match *self {
            DelaySpec::Constant { ns } => DelayDist::Constant { ns },
            DelaySpec::Anchored {
                min_ns,
                median_ns,
                max_ns,
                tail_z,
            } => DelayDist::anchored(
                SimTime::from_nanos(min_ns),
                SimTime::from_nanos(median_ns),
                SimTime::from_nanos(max_ns),
                tail_z.unwrap_or(default_z),
            ),
        }
    }

    fn check(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if let DelaySpec::Anchored {
            min_ns,
            median_ns,
            max_ns,
            tail_z,
        } = *self
        {
            if !(min_ns < median_ns && median_ns < max_ns) {
                issues.push(ValidationIssue::error(
                    field,
                    "need min_ns < median_ns < max_ns",
                ));
            }
            if tail_z.is_some_and(|z| !(z > 0.0 && z.is_finite())) {
                issues.push(ValidationIssue::error(field, "tail_z must be positive"));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelayConfig {
    pub rsv_grt: DelaySpec,
    pub switching: DelaySpec,
    pub nic_fixed_ns: u64,
    /// Rate at which a NIC reads a data frame from host memory before it can
    /// be transmitted; 0 disables the fetch. Control frames are sent inline.
    pub nic_fetch_gbps: f64,
    /// Upper bound of the uniform extra delay each frame picks up between
    /// the NIC and the switch pipeline. 0 disables it.
    pub ingress_jitter_ns: u64,
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            rsv_grt: DelaySpec::Anchored {
                min_ns: 1000,
                median_ns: 1060,
                max_ns: 14_000,
                tail_z: None,
            },
            switching: DelaySpec::Constant { ns: 347 },
            nic_fixed_ns: 60,
            nic_fetch_gbps: 100.0,
            ingress_jitter_ns: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdsFileConfig {
    pub blind_bytes: u64,
    pub grant_batch: u32,
    pub grant_window: u32,
    pub timeout_us: u64,
}

impl Default for RdsFileConfig {
    fn default() -> Self {
        let d = RdsConfig::default();
        RdsFileConfig {
            blind_bytes: d.blind_bytes,
            grant_batch: d.grant_batch,
            grant_window: d.grant_window,
            timeout_us: d.timeout.as_nanos() / 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    /// Record queue-depth and drop time series.
    pub timeseries: bool,
    pub queue_bucket_ns: u64,
    pub drop_bucket_ns: u64,
    /// Run the register conservation auditor.
    pub audit: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: OutputFormat::Json,
            timeseries: false,
            queue_bucket_ns: 1_000,
            drop_bucket_ns: 10_000_000,
            audit: cfg!(debug_assertions),
        }
    }
}

/// Message sizes as written in the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeSpec {
    Fixed {
        bytes: u64,
    },
    Uniform {
        min: u64,
        max: u64,
    },
    Lognormal {
        mean_bytes: f64,
        sigma: f64,
    },
    Bimodal {
        small: u64,
        large: u64,
        p_large: f64,
    },
    /// A CDF file, relative to the config file's directory.
    Cdf {
        path: PathBuf,
    },
    /// One of the bundled workload approximations `w1` .. `w5`.
    Builtin {
        name: String,
    },
}

impl SizeSpec {
    pub fn resolve(&self, base: &Path) -> Result<MessageSizeDist> {
        Ok(match self {
            SizeSpec::Fixed { bytes } => MessageSizeDist::Fixed { bytes: *bytes },
            SizeSpec::Uniform { min, max } => MessageSizeDist::Uniform {
                min: *min,
                max: *max,
            },
            SizeSpec::Lognormal { mean_bytes, sigma } => {
                MessageSizeDist::lognormal_with_mean(*mean_bytes, *sigma)
            }
            SizeSpec::Bimodal {
                small,
                large,
                p_large,
            } => MessageSizeDist::Bimodal {
                small: *small,
                large: *large,
                p_large: *p_large,
            },
            SizeSpec::Cdf { path } => load_cdf(base.join(path))?,
            SizeSpec::Builtin { name } => builtin_cdf(name)
                .ok_or_else(|| SimError::Distribution(format!("no bundled CDF named `{name}`")))?,
        })
    }
}

/// Traffic shape as written in the file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficSpec {
    Poisson,
    Deterministic,
    OnOff { peak_gbps: f64, mean_on_us: f64 },
    Backlogged,
}

impl TrafficSpec {
    fn resolve(self) -> Traffic {
        match self {
            TrafficSpec::Poisson => Traffic::Poisson,
            TrafficSpec::Deterministic => Traffic::Deterministic,
            TrafficSpec::OnOff {
                peak_gbps,
                mean_on_us,
            } => Traffic::OnOff {
                peak_bps: peak_gbps * 1e9,
                mean_on_ns: mean_on_us * 1e3,
            },
            TrafficSpec::Backlogged => Traffic::Backlogged,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub protocol: Protocol,
    pub pattern: Pattern,
    #[serde(default = "default_traffic")]
    pub traffic: TrafficSpec,
    #[serde(default = "default_size")]
    pub size: SizeSpec,
    /// Offered load per sending host.
    #[serde(default = "default_load")]
    pub load_gbps: f64,
    #[serde(default = "default_flows")]
    pub flows_per_host: u32,
    pub duration_ms: f64,
}

fn default_traffic() -> TrafficSpec {
    TrafficSpec::Poisson
}
fn default_size() -> SizeSpec {
    SizeSpec::Fixed { bytes: 6000 }
}
fn default_load() -> f64 {
    10.0
}
fn default_flows() -> u32 {
    11
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Extra simulated time after the last arrival for in-flight work to
    /// finish.
    pub drain_ms: f64,
    pub topology: TopologyConfig,
    pub pl2: Pl2Config,
    pub switch: SwitchFileConfig,
    pub delays: DelayConfig,
    pub rds: RdsFileConfig,
    pub output: OutputConfig,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
    /// Directory that relative paths (CDF files) resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            drain_ms: 5.0,
            topology: TopologyConfig::default(),
            pl2: Pl2Config::default(),
            switch: SwitchFileConfig::default(),
            delays: DelayConfig::default(),
            rds: RdsFileConfig::default(),
            output: OutputConfig::default(),
            scenarios: Vec::new(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Everything about the rack and protocols that is shared by all scenarios
/// of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub hosts: u32,
    pub link_rate_bps: u64,
    pub mtu: u32,
    pub propagation: SimTime,
    pub clock_ppm: u32,
    pub switch: SwitchConfig,
    pub sched: SchedulerParams,
    pub pipeline_segments: bool,
    pub flow_state: FlowStateScope,
    pub delays: DelayModel,
    /// 0 disables the transmit-side payload fetch.
    pub nic_fetch_bps: u64,
    pub ingress_jitter: SimTime,
    pub rds: RdsConfig,
    pub audit: bool,
    pub timeseries: bool,
    pub queue_bucket_ns: u64,
    pub drop_bucket_ns: u64,
    pub drain: SimTime,
}

impl Default for NetConfig {
    fn default() -> Self {
        RunConfig::default().net_config()
    }
}

impl NetConfig {
    pub fn timeslot(&self) -> SimTime {
        let bits = self.mtu as u128 * 8 * 1_000_000_000;
        SimTime::from_nanos(bits.div_ceil(self.link_rate_bps as u128) as u64)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// All problems found, errors and warnings.
    pub fn issues(&self) -> Vec<ValidationIssue> {
        let mut v = Vec::new();
        let t = &self.topology;
        if t.hosts < 2 || t.hosts > u16::MAX as u32 {
            v.push(ValidationIssue::error(
                "topology.hosts",
                "need at least 2 hosts",
            ));
        }
        if !(t.link_rate_gbps > 0.0 && t.link_rate_gbps.is_finite()) {
            v.push(ValidationIssue::error(
                "topology.link_rate_gbps",
                "must be positive",
            ));
        }
        if !(64..=9216).contains(&t.mtu) {
            v.push(ValidationIssue::error(
                "topology.mtu",
                "must be within 64..=9216",
            ));
        }
        if t.clock_ppm >= 10_000 {
            v.push(ValidationIssue::error(
                "topology.clock_ppm",
                "must be below 10000",
            ));
        }
        if self.pl2.k == 0 {
            v.push(ValidationIssue::error("pl2.k", "must be at least 1"));
        }
        if self.pl2.recency_multiple == 0 && self.pl2.recency_window_ns.is_none() {
            v.push(ValidationIssue::warning(
                "pl2.recency_multiple",
                "zero disables unsolicited bursts",
            ));
        }
        let big_t = self.switch.unsolicited_threshold;
        if self.pl2.t >= big_t {
            v.push(ValidationIssue::error(
                "pl2.t",
                format!("t = {} must be below T = {big_t}", self.pl2.t),
            ));
        } else if big_t < 4 * self.pl2.t {
            v.push(ValidationIssue::warning(
                "switch.unsolicited_threshold",
                format!("T = {big_t} is below 4t = {}", 4 * self.pl2.t),
            ));
        }
        if self.switch.output_queue_bytes < t.mtu as u64 {
            v.push(ValidationIssue::error(
                "switch.output_queue_bytes",
                "must hold at least one MTU",
            ));
        }
        if self.switch.shared_buffer_bytes < self.switch.output_queue_bytes {
            v.push(ValidationIssue::warning(
                "switch.shared_buffer_bytes",
                "smaller than one port's cap; the shared limit dominates",
            ));
        }
        self.delays.rsv_grt.check("delays.rsv_grt", &mut v);
        self.delays.switching.check("delays.switching", &mut v);
        if self.rds.blind_bytes == 0 || self.rds.grant_batch == 0 || self.rds.timeout_us == 0 {
            v.push(ValidationIssue::error(
                "rds",
                "blind_bytes, grant_batch and timeout_us must be positive",
            ));
        }
        if self.rds.grant_window < self.rds.grant_batch {
            v.push(ValidationIssue::error(
                "rds.grant_window",
                "must be at least grant_batch",
            ));
        }
        if !(self.drain_ms >= 0.0 && self.drain_ms.is_finite()) {
            v.push(ValidationIssue::error("drain_ms", "must be non-negative"));
        }
        if self.output.queue_bucket_ns == 0 || self.output.drop_bucket_ns == 0 {
            v.push(ValidationIssue::error(
                "output",
                "bucket widths must be positive",
            ));
        }
        if self.scenarios.is_empty() {
            v.push(ValidationIssue::error("scenario", "no scenarios defined"));
        }
        let mut names = std::collections::BTreeSet::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            let f = |k: &str| format!("scenario[{i}].{k}");
            if s.name.is_empty()
                || !s
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            {
                v.push(ValidationIssue::error(
                    f("name"),
                    "use letters, digits, '-', '_' or '.'",
                ));
            }
            if !names.insert(s.name.clone()) {
                v.push(ValidationIssue::error(
                    f("name"),
                    format!("duplicate `{}`", s.name),
                ));
            }
            if !(s.duration_ms >= 0.0 && s.duration_ms.is_finite()) {
                v.push(ValidationIssue::error(
                    f("duration_ms"),
                    "must be non-negative",
                ));
            }
            if s.traffic != TrafficSpec::Backlogged
                && !(s.load_gbps > 0.0 && s.load_gbps.is_finite())
            {
                v.push(ValidationIssue::error(f("load_gbps"), "must be positive"));
            }
            if let TrafficSpec::OnOff {
                peak_gbps,
                mean_on_us,
            } = s.traffic
            {
                if !(peak_gbps >= s.load_gbps && mean_on_us > 0.0) {
                    v.push(ValidationIssue::error(
                        f("traffic"),
                        "need peak_gbps >= load_gbps and mean_on_us > 0",
                    ));
                }
            }
            if s.flows_per_host == 0 {
                v.push(ValidationIssue::error(
                    f("flows_per_host"),
                    "must be at least 1",
                ));
            }
            let need = s.pattern.hosts_needed();
            if need == 0 || need > t.hosts {
                v.push(ValidationIssue::error(
                    f("pattern"),
                    format!(
                        "{} needs {need} hosts, topology has {}",
                        s.pattern.describe(),
                        t.hosts
                    ),
                ));
            }
            if let Pattern::Custom { pairs } = &s.pattern {
                if pairs.iter().any(|(a, b)| a == b) {
                    v.push(ValidationIssue::error(f("pattern.pairs"), "self-loop pair"));
                }
            }
            match s.size.resolve(&self.base_dir) {
                Ok(d) => {
                    if let Err(e) = d.validate() {
                        v.push(ValidationIssue::error(f("size"), e.to_string()));
                    }
                }
                Err(e) => v.push(ValidationIssue::error(f("size"), e.to_string())),
            }
        }
        v
    }

    /// Fails with every error-severity issue.
    pub fn validate(&self) -> Result<Vec<ValidationIssue>> {
        let all = self.issues();
        let (errors, warnings): (Vec<_>, Vec<_>) =
            all.into_iter().partition(|i| i.severity == Severity::Error);
        if errors.is_empty() {
            Ok(warnings)
        } else {
            Err(SimError::Config(errors))
        }
    }

    pub fn net_config(&self) -> NetConfig {
        let rate = (self.topology.link_rate_gbps * 1e9).round() as u64;
        let mut net = NetConfig {
            hosts: self.topology.hosts,
            link_rate_bps: rate.max(1),
            mtu: self.topology.mtu,
            propagation: SimTime::from_nanos(self.topology.propagation_ns),
            clock_ppm: self.topology.clock_ppm,
            switch: SwitchConfig {
                num_ports: self.topology.hosts.min(u16::MAX as u32) as u16,
                max_demand: self.pl2.k,
                unsolicited_threshold: self.switch.unsolicited_threshold,
                output_queue_capacity: self.switch.output_queue_bytes,
                shared_buffer_capacity: self.switch.shared_buffer_bytes,
                timeslot: SimTime::ZERO,
                settlement: self.switch.settlement,
                register_stage: self.switch.register_stage,
            },
            sched: SchedulerParams {
                k: self.pl2.k,
                t: self.pl2.t,
                recency_window: match self.pl2.recency_window_ns {
                    Some(ns) => RecencyWindow::Fixed(SimTime::from_nanos(ns)),
                    None => RecencyWindow::MedianMultiple(self.pl2.recency_multiple),
                },
            },
            pipeline_segments: self.pl2.pipeline_segments,
            flow_state: self.pl2.flow_state,
            delays: DelayModel {
                rsv_grt_exchange: self.delays.rsv_grt.resolve(Z_ONE_IN_A_MILLION),
                switching: self.delays.switching.resolve(Z_9999),
                nic_fixed: SimTime::from_nanos(self.delays.nic_fixed_ns),
            },
            nic_fetch_bps: (self.delays.nic_fetch_gbps.max(0.0) * 1e9).round() as u64,
            ingress_jitter: SimTime::from_nanos(self.delays.ingress_jitter_ns),
            rds: RdsConfig {
                blind_bytes: self.rds.blind_bytes,
                grant_batch: self.rds.grant_batch,
                grant_window: self.rds.grant_window,
                timeout: SimTime::from_micros(self.rds.timeout_us),
            },
            audit: self.output.audit,
            timeseries: self.output.timeseries,
            queue_bucket_ns: self.output.queue_bucket_ns,
            drop_bucket_ns: self.output.drop_bucket_ns,
            drain: SimTime::from_secs_f64(self.drain_ms / 1e3),
        };
        net.switch.timeslot = net.timeslot();
        net
    }

    pub fn scenario(&self, i: usize) -> Result<Scenario> {
        let s = &self.scenarios[i];
        Ok(Scenario {
            name: s.name.clone(),
            pattern: s.pattern.clone(),
            protocol: s.protocol,
            load_bps: s.load_gbps * 1e9,
            traffic: s.traffic.resolve(),
            size: s.size.resolve(&self.base_dir)?,
            flows_per_host: s.flows_per_host,
            duration: SimTime::from_secs_f64(s.duration_ms / 1e3),
        })
    }
}
