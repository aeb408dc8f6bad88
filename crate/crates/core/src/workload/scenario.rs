use serde::{Deserialize, Serialize};

use super::arrival::ArrivalProcess;
use super::dist::MessageSizeDist;
use crate::error::{Result, SimError};
use crate::ids::HostId;
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Pl2,
    Raw,
    Rds,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Pl2, Protocol::Raw, Protocol::Rds];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Pl2 => "pl2",
            Protocol::Raw => "raw",
            Protocol::Rds => "rds",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pl2" => Ok(Protocol::Pl2),
            "raw" => Ok(Protocol::Raw),
            "rds" => Ok(Protocol::Rds),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// Who talks to whom. Host ids are assigned from 0 in the order listed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// Hosts `0..senders` all send to host `senders`.
    Incast { senders: u16 },
    /// Host 0 sends to hosts `1..=receivers`.
    Outcast { receivers: u16 },
    /// Workers `0..workers` push per-layer gradients to servers
    /// `workers..workers+servers`; a server returns a layer's parameters to
    /// every worker once all workers' gradients for it have arrived.
    Shuffle {
        workers: u16,
        servers: u16,
        /// Total gradient bytes per worker per iteration.
        model_bytes: u64,
        iterations: u32,
        iteration_period_ns: u64,
    },
    /// Host 0 issues requests to host 1, which answers each delivered
    /// request.
    Rpc {
        request_bytes: u64,
        response_bytes: u64,
    },
    /// Explicit `(src, dst)` host pairs.
    Custom { pairs: Vec<(u16, u16)> },
}

impl Pattern {
    pub fn hosts_needed(&self) -> u32 {
        match self {
            Pattern::Incast { senders } => *senders as u32 + 1,
            Pattern::Outcast { receivers } => *receivers as u32 + 1,
            Pattern::Shuffle {
                workers, servers, ..
            } => *workers as u32 + *servers as u32,
            Pattern::Rpc { .. } => 2,
            Pattern::Custom { pairs } => pairs
                .iter()
                .map(|&(a, b)| a.max(b) as u32 + 1)
                .max()
                .unwrap_or(0),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Pattern::Incast { senders } => format!("incast({senders})"),
            Pattern::Outcast { receivers } => format!("outcast({receivers})"),
            Pattern::Shuffle {
                workers, servers, ..
            } => format!("shuffle({workers}x{servers})"),
            Pattern::Rpc { .. } => "rpc".into(),
            Pattern::Custom { pairs } => format!("custom({} pairs)", pairs.len()),
        }
    }
}

/// How each sender produces messages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Traffic {
    Poisson,
    Deterministic,
    /// Senders alternate between bursts at `peak_bps` and silence.
    OnOff {
        peak_bps: f64,
        mean_on_ns: f64,
    },
    /// Every flow always has a message ready.
    Backlogged,
    /// No generated traffic; messages are injected explicitly.
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub pattern: Pattern,
    pub protocol: Protocol,
    /// Offered load per sending host, bits/s. Ignored when backlogged.
    pub load_bps: f64,
    pub traffic: Traffic,
    pub size: MessageSizeDist,
    /// Sender threads per host, spread over the host's destinations.
    pub flows_per_host: u32,
    pub duration: SimTime,
}

/// Messages a source generates are spread round-robin over `flows`.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSpec {
    pub src: HostId,
    pub dst: HostId,
    pub arrival: ArrivalProcess,
    pub size: MessageSizeDist,
    pub flows: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowSpec {
    pub src: HostId,
    pub dst: HostId,
}

/// What a delivered message triggers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageTag {
    Plain,
    Request,
    Response,
    Gradient { iteration: u32, layer: u16 },
    Params,
}

/// A message created at a fixed time rather than by an arrival process.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedMessage {
    pub at: SimTime,
    pub flow: usize,
    pub bytes: u64,
    pub tag: MessageTag,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReplyRule {
    None,
    Rpc {
        response_bytes: u64,
    },
    Shuffle {
        workers: u16,
        /// Bytes of each layer, indexed by layer.
        layer_bytes: Vec<u64>,
    },
}

/// Everything the runner needs to drive one scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficPlan {
    pub hosts: u32,
    pub flows: Vec<FlowSpec>,
    pub sources: Vec<SourceSpec>,
    pub fixed: Vec<FixedMessage>,
    pub replies: ReplyRule,
}

impl TrafficPlan {
    /// Flow of `src` towards `dst` chosen by `counter` (round-robin).
    pub fn flow_between(&self, src: HostId, dst: HostId, counter: usize) -> Option<usize> {
        let candidates: Vec<usize> = self
            .flows
            .iter()
            .enumerate()
            .filter(|(_, f)| f.src == src && f.dst == dst)
            .map(|(i, _)| i)
            .collect();
        (!candidates.is_empty()).then(|| candidates[counter % candidates.len()])
    }
}

/// Parameter counts of the sixteen weight layers of VGG16, input to output.
pub const VGG16_LAYER_PARAMS: [u64; 16] = [
    1_792,
    36_928,
    73_856,
    147_584,
    295_168,
    590_080,
    590_080,
    1_180_160,
    2_359_808,
    2_359_808,
    2_359_808,
    2_359_808,
    2_359_808,
    102_764_544,
    16_781_312,
    4_097_000,
];

/// Splits `model_bytes` over the VGG16 layers in proportion to their size.
pub fn vgg16_layer_bytes(model_bytes: u64) -> Vec<u64> {
    let total: u64 = VGG16_LAYER_PARAMS.iter().sum();
    VGG16_LAYER_PARAMS
        .iter()
        .map(|&p| ((p as u128 * model_bytes as u128) / total as u128).max(1) as u64)
        .collect()
}

fn pair_flows(flows: &mut Vec<FlowSpec>, src: u16, dsts: &[u16], per_host: u32) -> Vec<Vec<usize>> {
    // spread per_host threads over the destinations, at least one each
    let n = dsts.len() as u32;
    dsts.iter()
        .enumerate()
        .map(|(j, &d)| {
            let share = (per_host / n + u32::from((j as u32) < per_host % n)).max(1);
            (0..share)
                .map(|_| {
                    flows.push(FlowSpec {
                        src: HostId(src),
                        dst: HostId(d),
                    });
                    flows.len() - 1
                })
                .collect()
        })
        .collect()
}

impl Scenario {
    fn arrival(&self, load_bps: f64, mean_bytes: f64) -> ArrivalProcess {
        match self.traffic {
            Traffic::Poisson => ArrivalProcess::poisson_for_load(load_bps, mean_bytes),
            Traffic::Deterministic => ArrivalProcess::Deterministic {
                interval_ns: mean_bytes * 8.0 * 1e9 / load_bps,
            },
            Traffic::OnOff {
                peak_bps,
                mean_on_ns,
            } => ArrivalProcess::on_off_for_load(load_bps, peak_bps, mean_on_ns, mean_bytes),
            Traffic::Backlogged | Traffic::Scripted => ArrivalProcess::Backlogged,
        }
    }

    pub fn validate_basic(&self) -> Result<()> {
        self.size.validate()?;
        let bad = |m: &str| Err(SimError::Distribution(m.to_string()));
        if !matches!(self.traffic, Traffic::Backlogged | Traffic::Scripted)
            && !(self.load_bps > 0.0 && self.load_bps.is_finite())
        {
            return bad("load must be positive");
        }
        if self.flows_per_host == 0 {
            return bad("flows_per_host must be at least 1");
        }
        Ok(())
    }

    /// Expands the scenario into flows and message sources for a rack of
    /// `hosts` hosts.
    pub fn build(&self, hosts: u32) -> Result<TrafficPlan> {
        self.validate_basic()?;
        let need = self.pattern.hosts_needed();
        if need == 0 || need > hosts {
            return Err(SimError::Config(vec![
                crate::config::ValidationIssue::error(
                    "scenario.pattern",
                    format!(
                        "{} needs {need} hosts but the topology has {hosts}",
                        self.pattern.describe()
                    ),
                ),
            ]));
        }
        let mut flows = Vec::new();
        let mut sources = Vec::new();
        let mut fixed = Vec::new();
        let mut replies = ReplyRule::None;
        let mean = self.size.mean();
        let fph = self.flows_per_host;

        match &self.pattern {
            Pattern::Incast { senders } => {
                for s in 0..*senders {
                    let f = pair_flows(&mut flows, s, &[*senders], fph).remove(0);
                    sources.push(SourceSpec {
                        src: HostId(s),
                        dst: HostId(*senders),
                        arrival: self.arrival(self.load_bps, mean),
                        size: self.size.clone(),
                        flows: f,
                    });
                }
            }
            Pattern::Outcast { receivers } => {
                let dsts: Vec<u16> = (1..=*receivers).collect();
                let groups = pair_flows(&mut flows, 0, &dsts, fph);
                for (d, f) in dsts.iter().zip(groups) {
                    sources.push(SourceSpec {
                        src: HostId(0),
                        dst: HostId(*d),
                        arrival: self.arrival(self.load_bps / *receivers as f64, mean),
                        size: self.size.clone(),
                        flows: f,
                    });
                }
            }
            Pattern::Custom { pairs } => {
                for &(s, d) in pairs {
                    if s == d {
                        return Err(SimError::Config(vec![
                            crate::config::ValidationIssue::error(
                                "scenario.pattern.pairs",
                                format!("host {s} cannot send to itself"),
                            ),
                        ]));
                    }
                    let f = pair_flows(&mut flows, s, &[d], fph).remove(0);
                    sources.push(SourceSpec {
                        src: HostId(s),
                        dst: HostId(d),
                        arrival: self.arrival(self.load_bps, mean),
                        size: self.size.clone(),
                        flows: f,
                    });
                }
            }
            Pattern::Rpc {
                request_bytes,
                response_bytes,
            } => {
                let req = pair_flows(&mut flows, 0, &[1], fph).remove(0);
                pair_flows(&mut flows, 1, &[0], fph);
                sources.push(SourceSpec {
                    src: HostId(0),
                    dst: HostId(1),
                    arrival: self.arrival(self.load_bps, *request_bytes as f64),
                    size: MessageSizeDist::Fixed {
                        bytes: *request_bytes,
                    },
                    flows: req,
                });
                replies = ReplyRule::Rpc {
                    response_bytes: *response_bytes,
                };
            }
            Pattern::Shuffle {
                workers,
                servers,
                model_bytes,
                iterations,
                iteration_period_ns,
            } => {
                let server_ids: Vec<u16> = (*workers..*workers + *servers).collect();
                let worker_ids: Vec<u16> = (0..*workers).collect();
                let mut worker_groups = Vec::new();
                for w in &worker_ids {
                    worker_groups.push(pair_flows(&mut flows, *w, &server_ids, fph));
                }
                for s in &server_ids {
                    pair_flows(&mut flows, *s, &worker_ids, fph);
                }
                let layers = vgg16_layer_bytes(*model_bytes);
                for it in 0..*iterations {
                    let at = SimTime::from_nanos(it as u64 * iteration_period_ns);
                    if at >= self.duration {
                        break;
                    }
                    for (wi, groups) in worker_groups.iter().enumerate() {
                        // backpropagation produces gradients output layer first
                        for (k, layer) in (0..layers.len()).rev().enumerate() {
                            let server = layer % *servers as usize;
                            let g = &groups[server];
                            fixed.push(FixedMessage {
                                at,
                                flow: g[(k + wi) % g.len()],
                                bytes: layers[layer],
                                tag: MessageTag::Gradient {
                                    iteration: it,
                                    layer: layer as u16,
                                },
                            });
                        }
                    }
                }
                replies = ReplyRule::Shuffle {
                    workers: *workers,
                    layer_bytes: layers,
                };
            }
        }
        Ok(TrafficPlan {
            hosts: need,
            flows,
            sources,
            fixed,
            replies,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scen(pattern: Pattern) -> Scenario {
        Scenario {
            name: "t".into(),
            pattern,
            protocol: Protocol::Pl2,
            load_bps: 18e9,
            traffic: Traffic::Poisson,
            size: MessageSizeDist::Fixed { bytes: 6000 },
            flows_per_host: 12,
            duration: SimTime::from_millis(1),
        }
    }

    #[test]
    fn incast_targets_one_receiver() {
        let p = scen(Pattern::Incast { senders: 5 }).build(64).unwrap();
        assert_eq!(p.hosts, 6);
        assert_eq!(p.sources.len(), 5);
        assert_eq!(p.flows.len(), 60);
        assert!(p.flows.iter().all(|f| f.dst == HostId(5)));
    }

    #[test]
    fn outcast_spreads_threads() {
        let p = scen(Pattern::Outcast { receivers: 4 }).build(64).unwrap();
        assert_eq!(p.flows.len(), 12);
        for d in 1..=4u16 {
            assert_eq!(p.flows.iter().filter(|f| f.dst == HostId(d)).count(), 3);
        }
        let per_dst = p.sources[0].arrival.mean_interarrival_ns().unwrap();
        // a quarter of 18 Gbps each
        assert!((6000.0 * 8.0 / per_dst - 4.5).abs() < 1e-9);
    }

    #[test]
    fn shuffle_layers() {
        let s = scen(Pattern::Shuffle {
            workers: 4,
            servers: 2,
            model_bytes: 500 << 20,
            iterations: 1,
            iteration_period_ns: 1_000_000,
        });
        let p = s.build(64).unwrap();
        assert_eq!(p.hosts, 6);
        assert_eq!(p.fixed.len(), 4 * 16);
        let per_worker: u64 = p.fixed.iter().take(16).map(|m| m.bytes).sum();
        assert!((per_worker as i64 - (500i64 << 20)).abs() < 16);
    }

    #[test]
    fn too_few_hosts() {
        assert!(scen(Pattern::Incast { senders: 5 }).build(4).is_err());
        let bad = scen(Pattern::Custom {
            pairs: vec![(2, 2)],
        });
        assert!(bad.build(8).is_err());
    }
}
