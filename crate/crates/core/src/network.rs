//! The rack: hosts with one NIC each, a single switch, and the event loop
//! that moves frames between them under one of the three transports.
//!
//! Timing model
//! - A host NIC serializes frames onto its uplink, control frames first.
//! - A frame reaches the switch pipeline `propagation + switching` after its
//!   last bit leaves the NIC, plus a uniform ingress jitter of at most
//!   `ingress_jitter`. Frames from one port keep their order. Without the
//!   jitter, line-rate senders phase-lock with the output port and drop-tail
//!   starves some of them.
//! - Output ports serialize the same way; delivery to the host stack takes
//!   `propagation + nic_fixed` more.
//! - Each RSV-GRT exchange draws one sample `d` of the exchange delay. The part
//!   of `d` not explained by the wire path is host stack time, split evenly
//!   between the send side (before the RSV reaches the NIC) and the receive
//!   side (after the GRT arrives).
//! - Data frames handed to a NIC are first read from host memory, one at a
//!   time at `nic_fetch_bps`, and only then join the transmit queue. Control
//!   frames are written inline and skip the fetch.

use std::collections::{HashMap, VecDeque};

use crate::baselines::rds::{blind_count, RdsReceiver, RdsSenderState, TimerOutcome};
use crate::config::{FlowStateScope, NetConfig};
use crate::error::{Result, SimError};
use crate::host::{
    on_grt, schedule_burst, Burst, Delivery, GrtAction, HostFlowState, ReceiverLedger,
    TransmitPlan, WaitContext,
};
use crate::ids::{BurstId, HostId, MessageId, PortId};
use crate::metrics::{DropCounts, InvariantCounters, LatencySummary, ScenarioReport, Series};
use crate::sim::{streams, EventQueue, LinkClock, PriorityTx, RngStream, SimTime};
use crate::switch::{
    DataHeader, DataVerdict, GrtInfo, OutputPorts, Pl2Dataplane, RegisterStage, RsvPacket,
    CONTROL_FRAME_BYTES,
};
use crate::workload::{
    ArrivalGen, FixedMessage, MessageTag, Protocol, ReplyRule, Scenario, Traffic, TrafficPlan,
};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Kind {
    Data {
        msg: MessageId,
        index: u32,
        burst: Option<BurstId>,
        solicited: bool,
    },
    Rsv(RsvPacket),
    Grt(GrtInfo),
    Grant {
        msg: MessageId,
        upto: u32,
    },
    Loss {
        msg: MessageId,
        missing: Box<[u32]>,
    },
    Ack {
        msg: MessageId,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Packet {
    src: HostId,
    dst: HostId,
    bytes: u32,
    kind: Kind,
}

impl Packet {
    fn is_data(&self) -> bool {
        matches!(self.kind, Kind::Data { .. })
    }

    fn control(src: HostId, dst: HostId, kind: Kind) -> Self {
        Packet {
            src,
            dst,
            bytes: CONTROL_FRAME_BYTES,
            kind,
        }
    }
}

#[derive(Clone, Debug)]
enum Ev {
    SourceArrival {
        source: u32,
    },
    FixedArrival {
        index: u32,
    },
    NicDone {
        host: u16,
    },
    /// A data frame finished its payload fetch.
    NicFetched {
        host: u16,
        pkt: Packet,
    },
    /// RSV (and an unsolicited copy of its burst) leaves the host stack.
    RsvOut {
        burst: BurstId,
        unsolicited: bool,
    },
    /// A burst's waiting time and send-path stack time have elapsed.
    BurstTx {
        burst: BurstId,
    },
    SwitchProc {
        pkt: Packet,
    },
    PortDone {
        port: u16,
    },
    HostIn {
        pkt: Packet,
    },
    RdsTxTimer {
        msg: MessageId,
    },
    RdsRxTimer {
        msg: MessageId,
    },
}

/// Observable protocol events, recorded when tracing is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    /// The switch processed an RSV and produced a GRT.
    Grant {
        at: SimTime,
        burst: BurstId,
        src: HostId,
        dst: HostId,
        send_timeslot: u32,
        recv_timeslot: u32,
    },
    /// The sender processed a GRT.
    GrtArrival {
        at: SimTime,
        burst: BurstId,
        chosen: u32,
        wait: Option<SimTime>,
    },
    /// A burst's frames were handed to the NIC.
    BurstTx {
        at: SimTime,
        burst: BurstId,
        unsolicited: bool,
    },
    /// First copy of a packet reached its receiver.
    Deliver {
        at: SimTime,
        msg: MessageId,
        index: u32,
    },
}

#[derive(Clone, Debug)]
struct Msg {
    src: HostId,
    dst: HostId,
    flow: u32,
    bytes: u64,
    packets: u32,
    blind: u32,
    created: SimTime,
    delivered: u32,
    completed: Option<SimTime>,
    handed_over: bool,
    tag: MessageTag,
}

#[derive(Clone, Debug)]
struct BurstRec {
    burst: Burst,
    msg: MessageId,
    first_index: u32,
    lane: u32,
    last_of_msg: bool,
    /// Host stack time on the send path, paid by the RSV and again by the
    /// scheduled data.
    send_extra: SimTime,
    grt_extra: SimTime,
    sent_unsolicited: bool,
}

/// PL2 scheduling unit: one [`HostFlowState`] with its queue of bursts.
#[derive(Clone, Debug, Default)]
struct Lane {
    state: HostFlowState,
    queue: VecDeque<BurstId>,
    /// Waiting for the current burst to be handed to the NIC before the next
    /// RSV (serialized segments).
    blocked: bool,
    outstanding: u32,
}

#[derive(Clone, Debug)]
struct Flow {
    src: HostId,
    dst: HostId,
    lane: u32,
    backlogged: bool,
    /// Round-robin counter for replies sent on this flow's reverse path.
    sent: u64,
}

struct Host {
    nic: PriorityTx<Packet>,
    fetch_free_at: SimTime,
    fetching_bytes: u64,
    rds_rx: RdsReceiver,
}

#[derive(Default)]
struct Counters {
    packets_generated: u64,
    packets_delivered: u64,
    duplicates: u64,
    drops: DropCounts,
    control_bytes: u64,
    data_bytes: u64,
    bursts: u64,
    unsolicited: u64,
    resent: u64,
    rds_tx_timeouts: u64,
    rds_rx_timeouts: u64,
    rds_losses: u64,
    goodput_bytes: u64,
    throughput_bytes: u64,
    sender_goodput: Vec<u64>,
    floor_violations: u64,
    max_outstanding: u32,
}

struct QueueStats {
    depth_area: Vec<u128>,
    last_change: Vec<u64>,
    series: Option<Series>,
    cur_bucket: u64,
    cur_max: u64,
}

/// One scenario on one rack. Build with [`Simulation::new`], optionally
/// inject messages or enable tracing, then [`Simulation::run`].
pub struct Simulation {
    net: NetConfig,
    scenario: Scenario,
    seed: u64,
    plan: TrafficPlan,
    end_of_arrivals: SimTime,
    horizon: SimTime,

    q: EventQueue<Ev>,
    hosts: Vec<Host>,
    ports: OutputPorts<Packet>,
    dataplane: Pl2Dataplane,
    /// Per ingress port; frames from one port keep their order.
    ingress_free_at: Vec<SimTime>,
    base_exchange: SimTime,

    flows: Vec<Flow>,
    lanes: Vec<Lane>,
    sources: Vec<(ArrivalGen, RngStream, usize)>,
    fixed: Vec<FixedMessage>,
    msgs: Vec<Msg>,
    bursts: Vec<BurstRec>,
    rds_tx: Vec<Option<RdsSenderState>>,
    ledger: ReceiverLedger,
    shuffle_seen: HashMap<(u32, u16), u16>,

    delay_rng: RngStream,
    switch_rng: RngStream,
    ingress_rng: RngStream,
    c: Counters,
    qs: QueueStats,
    trace: Option<Vec<TraceEvent>>,
}

fn packet_size(bytes: u64, mtu: u32, index: u32, packets: u32) -> u32 {
    if index + 1 < packets {
        mtu
    } else {
        (bytes - (packets as u64 - 1) * mtu as u64) as u32
    }
}

fn ser_ns(bytes: u64, rate: u64) -> u64 {
    ((bytes as u128 * 8 * 1_000_000_000).div_ceil(rate as u128)) as u64
}

impl Simulation {
    pub fn new(net: &NetConfig, scenario: &Scenario, seed: u64) -> Result<Self> {
        let plan = scenario.build(net.hosts)?;
        let hosts_n = net.hosts as usize;
        let mut topo = RngStream::new(seed, streams::TOPOLOGY);
        let ppm = net.clock_ppm as i64;
        let hosts = (0..hosts_n)
            .map(|_| {
                let off = if ppm == 0 {
                    0
                } else {
                    (topo.unit() * (2 * ppm + 1) as f64) as i64 - ppm
                };
                Host {
                    nic: PriorityTx::new(LinkClock::new(net.link_rate_bps, off as i32)),
                    fetch_free_at: SimTime::ZERO,
                    fetching_bytes: 0,
                    rds_rx: RdsReceiver::new(net.rds),
                }
            })
            .collect();

        let mut sw = net.switch;
        sw.num_ports = net.hosts as u16;
        sw.timeslot = net.timeslot();

        // lanes
        let mut lanes = Vec::new();
        let mut lane_of: HashMap<(HostId, HostId), u32> = HashMap::new();
        let backlogged = scenario.traffic == Traffic::Backlogged;
        let flows = plan
            .flows
            .iter()
            .map(|f| {
                let lane = match net.flow_state {
                    FlowStateScope::Thread => {
                        lanes.push(Lane::default());
                        lanes.len() as u32 - 1
                    }
                    FlowStateScope::Destination => {
                        *lane_of.entry((f.src, f.dst)).or_insert_with(|| {
                            lanes.push(Lane::default());
                            lanes.len() as u32 - 1
                        })
                    }
                };
                Flow {
                    src: f.src,
                    dst: f.dst,
                    lane,
                    backlogged: false,
                    sent: 0,
                }
            })
            .collect::<Vec<_>>();

        let sources = if matches!(scenario.traffic, Traffic::Scripted) {
            Vec::new()
        } else {
            plan.sources
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let arr = RngStream::new(seed, streams::WORKLOAD_BASE + 2 * i as u64);
                    let size = RngStream::new(seed, streams::WORKLOAD_BASE + 2 * i as u64 + 1);
                    (ArrivalGen::new(s.arrival, arr, SimTime::ZERO), size, 0usize)
                })
                .collect()
        };

        let ser64 = ser_ns(CONTROL_FRAME_BYTES as u64, net.link_rate_bps);
        let base_exchange = SimTime::from_nanos(
            2 * ser64 + 2 * net.propagation.as_nanos() + net.delays.switching.median().as_nanos(),
        ) + net.delays.nic_fixed;

        let series = net.timeseries.then(|| Series {
            queue_bucket_ns: net.queue_bucket_ns,
            drop_bucket_ns: net.drop_bucket_ns,
            ..Default::default()
        });

        let mut sim = Simulation {
            end_of_arrivals: scenario.duration,
            horizon: scenario.duration + net.drain,
            q: EventQueue::new(),
            hosts,
            ports: OutputPorts::new(&sw, net.link_rate_bps),
            dataplane: Pl2Dataplane::new(sw, net.audit),
            ingress_free_at: vec![SimTime::ZERO; hosts_n],
            base_exchange,
            flows,
            lanes,
            sources,
            fixed: plan.fixed.clone(),
            msgs: Vec::new(),
            bursts: Vec::new(),
            rds_tx: Vec::new(),
            ledger: ReceiverLedger::new(),
            shuffle_seen: HashMap::new(),
            delay_rng: RngStream::new(seed, streams::DELAYS),
            switch_rng: RngStream::new(seed, streams::SWITCHING),
            ingress_rng: RngStream::new(seed, streams::INGRESS),
            c: Counters {
                sender_goodput: vec![0; hosts_n],
                ..Default::default()
            },
            qs: QueueStats {
                depth_area: vec![0; hosts_n],
                last_change: vec![0; hosts_n],
                series,
                cur_bucket: 0,
                cur_max: 0,
            },
            trace: None,
            net: net.clone(),
            scenario: scenario.clone(),
            seed,
            plan,
        };
        if backlogged {
            for f in &mut sim.flows {
                f.backlogged = true;
            }
        }
        Ok(sim)
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Adds a message of `bytes` on `flow` (an index into the scenario's flow
    /// list) created at `at`.
    pub fn inject(&mut self, at: SimTime, flow: usize, bytes: u64) {
        self.fixed.push(FixedMessage {
            at,
            flow,
            bytes,
            tag: MessageTag::Plain,
        });
    }

    pub fn plan(&self) -> &TrafficPlan {
        &self.plan
    }

    fn rec(&mut self, e: TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.push(e);
        }
    }

    fn invariant(&self, message: impl Into<String>) -> SimError {
        SimError::Invariant {
            position: self.q.dispatched(),
            time: self.q.now(),
            message: message.into(),
        }
    }

    fn wrap<T>(&self, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            e @ SimError::Invariant { .. } => e,
            other => self.invariant(other.to_string()),
        })
    }

    pub fn run(mut self) -> Result<(ScenarioReport, Option<Vec<TraceEvent>>)> {
        self.seed_events()?;
        while let Some(t) = self.q.peek_time() {
            if t > self.horizon {
                break;
            }
            let (now, ev) = self.q.pop().expect("peeked");
            self.dispatch(now, ev)?;
        }
        let report = self.finish();
        Ok((report, self.trace.take()))
    }

    fn seed_events(&mut self) -> Result<()> {
        for i in 0..self.sources.len() {
            if let Some(t) = self.sources[i].0.next_arrival() {
                if t < self.end_of_arrivals {
                    self.q.schedule(t, Ev::SourceArrival { source: i as u32 })?;
                }
            }
        }
        if self.scenario.traffic == Traffic::Backlogged && self.scenario.duration > SimTime::ZERO {
            for f in 0..self.flows.len() {
                if self.source_of_flow(f).is_some() {
                    self.new_backlogged_message(f, SimTime::ZERO)?;
                }
            }
        }
        for (i, m) in self.fixed.iter().enumerate() {
            if m.at < self.end_of_arrivals {
                self.q
                    .schedule(m.at, Ev::FixedArrival { index: i as u32 })?;
            }
        }
        Ok(())
    }

    fn source_of_flow(&self, flow: usize) -> Option<usize> {
        self.plan
            .sources
            .iter()
            .position(|s| s.flows.contains(&flow))
    }

    fn new_backlogged_message(&mut self, flow: usize, now: SimTime) -> Result<()> {
        let Some(si) = self.source_of_flow(flow) else {
            return Ok(());
        };
        let bytes = self.plan.sources[si].size.sample(&mut self.sources[si].1);
        self.new_message(now, flow, bytes, MessageTag::Plain)
    }

    fn dispatch(&mut self, now: SimTime, ev: Ev) -> Result<()> {
        match ev {
            Ev::SourceArrival { source } => {
                let s = source as usize;
                let bytes = self.plan.sources[s].size.sample(&mut self.sources[s].1);
                let flows = &self.plan.sources[s].flows;
                let flow = flows[self.sources[s].2 % flows.len()];
                self.sources[s].2 += 1;
                self.new_message(now, flow, bytes, MessageTag::Plain)?;
                if let Some(t) = self.sources[s].0.next_arrival() {
                    if t < self.end_of_arrivals {
                        self.q.schedule(t.max(now), Ev::SourceArrival { source })?;
                    }
                }
            }
            Ev::FixedArrival { index } => {
                let m = self.fixed[index as usize];
                self.new_message(now, m.flow, m.bytes, m.tag)?;
            }
            Ev::NicDone { host } => self.nic_done(now, host)?,
            Ev::NicFetched { host, pkt } => {
                let h = &mut self.hosts[host as usize];
                h.fetching_bytes -= pkt.bytes as u64;
                let b = pkt.bytes;
                h.nic.push_data(pkt, b);
                self.kick_nic(now, HostId(host))?;
            }
            Ev::RsvOut { burst, unsolicited } => self.rsv_out(now, burst, unsolicited)?,
            Ev::BurstTx { burst } => self.burst_tx(now, burst, false)?,
            Ev::SwitchProc { pkt } => self.switch_proc(now, pkt)?,
            Ev::PortDone { port } => self.port_done(now, port)?,
            Ev::HostIn { pkt } => self.host_in(now, pkt)?,
            Ev::RdsTxTimer { msg } => self.rds_tx_timer(now, msg)?,
            Ev::RdsRxTimer { msg } => self.rds_rx_timer(now, msg)?,
        }
        Ok(())
    }

    // ---- message creation -------------------------------------------------

    fn new_message(
        &mut self,
        now: SimTime,
        flow: usize,
        bytes: u64,
        tag: MessageTag,
    ) -> Result<()> {
        if bytes == 0 {
            return Err(self.invariant("zero-byte message generated"));
        }
        let mtu = self.net.mtu;
        let f = &self.flows[flow];
        let packets = bytes.div_ceil(mtu as u64) as u32;
        let id = MessageId(self.msgs.len() as u64);
        let blind = if self.scenario.protocol == Protocol::Rds {
            let sizes: Vec<u32> = (0..packets)
                .map(|i| packet_size(bytes, mtu, i, packets))
                .collect();
            blind_count(&sizes, self.net.rds.blind_bytes)
        } else {
            packets
        };
        self.msgs.push(Msg {
            src: f.src,
            dst: f.dst,
            flow: flow as u32,
            bytes,
            packets,
            blind,
            created: now,
            delivered: 0,
            completed: None,
            handed_over: false,
            tag,
        });
        match self.scenario.protocol {
            Protocol::Raw => {
                let host = f.src;
                for i in 0..packets {
                    self.push_data(now, host, id, i, None, true)?;
                }
            }
            Protocol::Rds => {
                let sizes: Vec<u32> = (0..packets)
                    .map(|i| packet_size(bytes, mtu, i, packets))
                    .collect();
                let mut st = RdsSenderState::new(id, &sizes, &self.net.rds, now);
                let range = st.start(now);
                if self.rds_tx.len() <= id.index() {
                    self.rds_tx.resize(id.index() + 1, None);
                }
                self.rds_tx[id.index()] = Some(st);
                let host = self.flows[flow].src;
                for i in range {
                    self.push_data(now, host, id, i, None, true)?;
                }
                self.q
                    .schedule(now + self.net.rds.timeout, Ev::RdsTxTimer { msg: id })?;
            }
            Protocol::Pl2 => {
                let k = self.net.sched.k;
                let lane = self.flows[flow].lane;
                let (src, dst) = (self.flows[flow].src, self.flows[flow].dst);
                let mut first = 0;
                while first < packets {
                    let n = k.min(packets - first);
                    let sizes = (first..first + n)
                        .map(|i| packet_size(bytes, mtu, i, packets))
                        .collect();
                    let bid = BurstId(self.bursts.len() as u64);
                    let burst = self.wrap(Burst::new(bid, src, dst, sizes, now, k, mtu))?;
                    self.bursts.push(BurstRec {
                        burst,
                        msg: id,
                        first_index: first,
                        lane,
                        last_of_msg: first + n == packets,
                        send_extra: SimTime::ZERO,
                        grt_extra: SimTime::ZERO,
                        sent_unsolicited: false,
                    });
                    self.lanes[lane as usize].queue.push_back(bid);
                    first += n;
                }
                self.issue_next(now, lane)?;
            }
        }
        self.kick_nic(now, self.flows[flow].src)?;
        Ok(())
    }

    fn push_data(
        &mut self,
        now: SimTime,
        host: HostId,
        msg: MessageId,
        index: u32,
        burst: Option<BurstId>,
        solicited: bool,
    ) -> Result<()> {
        let m = &self.msgs[msg.index()];
        let bytes = packet_size(m.bytes, self.net.mtu, index, m.packets);
        let pkt = Packet {
            src: m.src,
            dst: m.dst,
            bytes,
            kind: Kind::Data {
                msg,
                index,
                burst,
                solicited,
            },
        };
        self.c.packets_generated += 1;
        self.c.data_bytes += bytes as u64;
        let h = &mut self.hosts[host.index()];
        if self.net.nic_fetch_bps == 0 {
            h.nic.push_data(pkt, bytes);
            return Ok(());
        }
        let ready = now.max(h.fetch_free_at)
            + SimTime::from_nanos(ser_ns(bytes as u64, self.net.nic_fetch_bps));
        h.fetch_free_at = ready;
        h.fetching_bytes += bytes as u64;
        self.q.schedule(ready, Ev::NicFetched { host: host.0, pkt })
    }

    fn push_control(&mut self, host: HostId, pkt: Packet) {
        self.c.control_bytes += pkt.bytes as u64;
        let b = pkt.bytes;
        self.hosts[host.index()].nic.push_control(pkt, b);
    }

    fn kick_nic(&mut self, now: SimTime, host: HostId) -> Result<()> {
        if let Some(done) = self.hosts[host.index()].nic.try_start(now) {
            self.q.schedule(done, Ev::NicDone { host: host.0 })?;
        }
        Ok(())
    }

    // ---- PL2 sender -------------------------------------------------------

    fn issue_next(&mut self, now: SimTime, lane: u32) -> Result<()> {
        let l = &mut self.lanes[lane as usize];
        if l.blocked || l.state.outstanding.is_some() {
            return Ok(());
        }
        let Some(bid) = l.queue.pop_front() else {
            return Ok(());
        };
        let plan = schedule_burst(&mut l.state, &self.net.sched, lane as usize, bid, now);
        let plan = self.wrap(plan)?;
        let l = &mut self.lanes[lane as usize];
        l.outstanding += 1;
        l.blocked = true;
        self.c.max_outstanding = self.c.max_outstanding.max(l.outstanding);
        self.c.bursts += 1;
        let unsolicited = plan == TransmitPlan::RsvWithUnsolicited;
        if unsolicited {
            self.c.unsolicited += 1;
        }
        let d = self.net.delays.sample_rsv_grt_delay(&mut self.delay_rng);
        let extra = d.saturating_sub(self.base_exchange).as_nanos();
        let send_side = SimTime::from_nanos(extra / 2);
        self.bursts[bid.index()].send_extra = send_side;
        self.bursts[bid.index()].grt_extra = SimTime::from_nanos(extra - extra / 2);
        self.q.schedule(
            now + send_side,
            Ev::RsvOut {
                burst: bid,
                unsolicited,
            },
        )
    }

    fn rsv_out(&mut self, now: SimTime, bid: BurstId, unsolicited: bool) -> Result<()> {
        let b = &self.bursts[bid.index()].burst;
        let (src, dst, demand) = (b.src, b.dst, b.demand());
        let rsv = RsvPacket {
            src: PortId(src.0),
            dst: PortId(dst.0),
            demand,
            burst_id: bid,
        };
        self.push_control(src, Packet::control(src, dst, Kind::Rsv(rsv)));
        if unsolicited {
            self.bursts[bid.index()].sent_unsolicited = true;
            self.burst_tx(now, bid, true)?;
        }
        self.kick_nic(now, src)
    }

    /// Hands a burst's frames to the NIC.
    fn burst_tx(&mut self, now: SimTime, bid: BurstId, unsolicited: bool) -> Result<()> {
        let rec = &self.bursts[bid.index()];
        let (src, msg, first, n, lane, last) = (
            rec.burst.src,
            rec.msg,
            rec.first_index,
            rec.burst.demand(),
            rec.lane,
            rec.last_of_msg,
        );
        for i in first..first + n {
            self.push_data(now, src, msg, i, Some(bid), !unsolicited)?;
        }
        self.rec(TraceEvent::BurstTx {
            at: now,
            burst: bid,
            unsolicited,
        });
        self.kick_nic(now, src)?;
        if !unsolicited {
            // scheduled transmission (first send or resend) releases the lane
            // in serialized mode
            let l = &mut self.lanes[lane as usize];
            if l.state.outstanding.is_none() {
                l.blocked = false;
            }
            self.issue_next(now, lane)?;
        }
        if last {
            self.message_handed_over(now, msg)?;
        }
        Ok(())
    }

    fn message_handed_over(&mut self, now: SimTime, msg: MessageId) -> Result<()> {
        let flow = self.msgs[msg.index()].flow as usize;
        if self.flows[flow].backlogged
            && self.scenario.protocol == Protocol::Pl2
            && now < self.end_of_arrivals
            && !self.msgs[msg.index()].handed_over
        {
            self.msgs[msg.index()].handed_over = true;
            self.new_backlogged_message(flow, now)?;
        }
        Ok(())
    }

    fn grt_in(&mut self, now: SimTime, grt: GrtInfo) -> Result<()> {
        let bid = grt.burst_id;
        let Some(rec) = self.bursts.get(bid.index()) else {
            return Err(self.invariant(format!("GRT for unknown burst {bid}")));
        };
        let (lane, src) = (rec.lane, rec.burst.src);
        let pending =
            self.hosts[src.index()].nic.data_bytes() + self.hosts[src.index()].fetching_bytes;
        let ctx = WaitContext {
            nic_pending_bytes: pending,
            timeslot: self.net.timeslot(),
            line_rate_bps: self.net.link_rate_bps,
        };
        let l = &mut self.lanes[lane as usize];
        let action = on_grt(&mut l.state, &self.net.sched, &grt, now, ctx);
        let action = self.wrap(action)?;
        let l = &mut self.lanes[lane as usize];
        l.outstanding -= 1;
        let (chosen, wait) = match action {
            GrtAction::Transmit { chosen, wait } => (chosen, Some(wait)),
            GrtAction::Resend { chosen, wait } => {
                self.c.resent += 1;
                (chosen, Some(wait))
            }
            GrtAction::Done { chosen } => (chosen, None),
        };
        self.rec(TraceEvent::GrtArrival {
            at: now,
            burst: bid,
            chosen,
            wait,
        });
        match wait {
            Some(w) => {
                // The wait runs from the moment the data already queued at
                // the NIC has drained, which is what the pending term assumes.
                let drain = SimTime::from_nanos(ser_ns(pending, self.net.link_rate_bps));
                let at = now + drain + w + self.bursts[bid.index()].send_extra;
                self.q.schedule(at, Ev::BurstTx { burst: bid })?;
                if self.net.pipeline_segments {
                    self.lanes[lane as usize].blocked = false;
                    self.issue_next(now, lane)?;
                }
            }
            None => {
                self.lanes[lane as usize].blocked = false;
                self.issue_next(now, lane)?;
            }
        }
        Ok(())
    }

    // ---- wire -------------------------------------------------------------

    fn nic_done(&mut self, now: SimTime, host: u16) -> Result<()> {
        let h = host as usize;
        let Some(pkt) = self.hosts[h].nic.finish() else {
            return Err(self.invariant("NIC completion with nothing in service"));
        };
        if self.scenario.protocol == Protocol::Raw {
            if let Kind::Data { msg, index, .. } = pkt.kind {
                let m = &self.msgs[msg.index()];
                if index + 1 == m.packets
                    && self.flows[m.flow as usize].backlogged
                    && now < self.end_of_arrivals
                {
                    let flow = m.flow as usize;
                    self.new_backlogged_message(flow, now)?;
                }
            }
        }
        let sw = self.net.delays.sample_switching_delay(&mut self.switch_rng);
        let j = self.net.ingress_jitter.as_nanos();
        let extra = if j == 0 {
            0
        } else {
            ((self.ingress_rng.unit() * (j + 1) as f64) as u64).min(j)
        };
        let at = (now + self.net.propagation + sw + SimTime::from_nanos(extra))
            .max(self.ingress_free_at[h]);
        self.ingress_free_at[h] = at;
        self.q.schedule(at, Ev::SwitchProc { pkt })?;
        self.kick_nic(now, HostId(host))
    }

    fn switch_proc(&mut self, now: SimTime, pkt: Packet) -> Result<()> {
        let out = PortId(pkt.dst.0);
        match &pkt.kind {
            Kind::Data { solicited, .. } => {
                let ingress = self.net.switch.register_stage == RegisterStage::Ingress;
                if self.scenario.protocol == Protocol::Pl2 && ingress {
                    let verdict = self.dataplane.handle_data(&self.data_header(&pkt));
                    self.check_audit()?;
                    if verdict == DataVerdict::DropUnsolicited {
                        self.c.drops.unsolicited_threshold += 1;
                        self.note_drop(now);
                        return Ok(());
                    }
                }
                let bytes = pkt.bytes;
                let unsolicited = !*solicited;
                self.note_depth(now, out);
                if let Err(pkt) = self.ports.admit(out, pkt, bytes) {
                    if self.scenario.protocol == Protocol::Pl2 && !ingress {
                        self.dataplane.handle_data(&self.data_header(&pkt));
                        self.check_audit()?;
                    }
                    self.c.drops.buffer_overrun += 1;
                    if unsolicited {
                        self.c.drops.buffer_overrun_unsolicited += 1;
                    }
                    self.note_drop(now);
                    return Ok(());
                }
                self.note_series(now, out);
            }
            Kind::Rsv(rsv) => {
                let grt = self.dataplane.handle_rsv(rsv);
                let grt = self.wrap(grt)?;
                self.check_audit()?;
                self.rec(TraceEvent::Grant {
                    at: now,
                    burst: rsv.burst_id,
                    src: pkt.src,
                    dst: pkt.dst,
                    send_timeslot: grt.send_timeslot,
                    recv_timeslot: grt.recv_timeslot,
                });
                let back = Packet::control(pkt.dst, pkt.src, Kind::Grt(grt));
                self.c.control_bytes += back.bytes as u64;
                let port = PortId(pkt.src.0);
                self.ports.push_control(port, back, CONTROL_FRAME_BYTES);
                return self.kick_port(now, port);
            }
            _ => {
                let b = pkt.bytes;
                self.ports.push_control(out, pkt, b);
            }
        }
        self.kick_port(now, out)
    }

    fn check_audit(&self) -> Result<()> {
        if let Some(a) = self.dataplane.auditor() {
            if let Some(v) = a.violations().first() {
                return Err(self.invariant(format!("register conservation: {v}")));
            }
        }
        if self.dataplane.registers().input.rmw_violations()
            + self.dataplane.registers().output.rmw_violations()
            > 0
        {
            return Err(self.invariant("more than one read-modify-write per register array"));
        }
        Ok(())
    }

    fn data_header(&self, pkt: &Packet) -> DataHeader {
        let (burst, solicited) = match pkt.kind {
            Kind::Data {
                burst, solicited, ..
            } => (burst, solicited),
            _ => (None, true),
        };
        DataHeader {
            src: PortId(pkt.src.0),
            dst: PortId(pkt.dst.0),
            solicited,
            burst,
            resend: solicited && burst.is_some_and(|b| self.bursts[b.index()].sent_unsolicited),
        }
    }

    fn kick_port(&mut self, now: SimTime, port: PortId) -> Result<()> {
        let egress = self.scenario.protocol == Protocol::Pl2
            && self.net.switch.register_stage == RegisterStage::Egress;
        let done = if egress {
            let mut discarded = Vec::new();
            let mut gated = false;
            let bursts = &self.bursts;
            let dataplane = &mut self.dataplane;
            let done = self.ports.try_start_gated(
                port,
                now,
                |pkt| {
                    let Kind::Data {
                        burst, solicited, ..
                    } = pkt.kind
                    else {
                        return true;
                    };
                    let hdr = DataHeader {
                        src: PortId(pkt.src.0),
                        dst: PortId(pkt.dst.0),
                        solicited,
                        burst,
                        resend: solicited
                            && burst.is_some_and(|b| bursts[b.index()].sent_unsolicited),
                    };
                    gated = true;
                    dataplane.handle_data(&hdr) == DataVerdict::Forward
                },
                &mut discarded,
            );
            if gated {
                self.check_audit()?;
            }
            if !discarded.is_empty() {
                self.note_depth(now, port);
                for _ in &discarded {
                    self.c.drops.unsolicited_threshold += 1;
                    self.note_drop(now);
                }
                self.note_series(now, port);
            }
            done
        } else {
            self.ports.try_start(port, now)
        };
        if let Some(done) = done {
            self.q.schedule(done, Ev::PortDone { port: port.0 })?;
        }
        Ok(())
    }

    fn port_done(&mut self, now: SimTime, port: u16) -> Result<()> {
        let p = PortId(port);
        self.note_depth(now, p);
        let Some(pkt) = self.ports.finish(p) else {
            return Err(self.invariant("port completion with nothing in service"));
        };
        self.note_series(now, p);
        let mut at = now + self.net.propagation + self.net.delays.nic_fixed;
        if let Kind::Grt(g) = &pkt.kind {
            at += self.bursts[g.burst_id.index()].grt_extra;
        }
        self.q.schedule(at, Ev::HostIn { pkt })?;
        self.kick_port(now, p)
    }

    // ---- receivers ----------------------------------------------------------

    fn host_in(&mut self, now: SimTime, pkt: Packet) -> Result<()> {
        match pkt.kind {
            Kind::Data { msg, index, .. } => self.data_in(now, pkt.dst, pkt.bytes, msg, index),
            Kind::Grt(g) => self.grt_in(now, g),
            Kind::Rsv(_) => Err(self.invariant("RSV delivered to a host")),
            Kind::Grant { msg, upto } => {
                let Some(Some(st)) = self.rds_tx.get_mut(msg.index()) else {
                    return Ok(());
                };
                let range = st.on_grant(upto, now);
                let host = self.msgs[msg.index()].src;
                for i in range {
                    self.push_data(now, host, msg, i, None, true)?;
                }
                self.kick_nic(now, host)
            }
            Kind::Loss { msg, missing } => {
                let Some(Some(st)) = self.rds_tx.get_mut(msg.index()) else {
                    return Ok(());
                };
                let resend = st.on_loss(&missing, now);
                let host = self.msgs[msg.index()].src;
                for i in resend {
                    self.push_data(now, host, msg, i, None, true)?;
                }
                self.kick_nic(now, host)
            }
            Kind::Ack { msg } => {
                if let Some(Some(st)) = self.rds_tx.get_mut(msg.index()) {
                    st.on_ack(now);
                }
                self.rds_tx[msg.index()] = None;
                let flow = self.msgs[msg.index()].flow as usize;
                if self.flows[flow].backlogged && now < self.end_of_arrivals {
                    self.new_backlogged_message(flow, now)?;
                }
                Ok(())
            }
        }
    }

    fn data_in(
        &mut self,
        now: SimTime,
        host: HostId,
        bytes: u32,
        msg: MessageId,
        index: u32,
    ) -> Result<()> {
        let in_window = now <= self.end_of_arrivals;
        if in_window {
            self.c.throughput_bytes += bytes as u64;
        }
        let (total, blind, src) = {
            let m = &self.msgs[msg.index()];
            (m.packets, m.blind, m.src)
        };
        if self.ledger.deliver(msg.0, index, total) == Delivery::Suppressed {
            self.c.duplicates += 1;
            return Ok(());
        }
        self.c.packets_delivered += 1;
        if in_window {
            self.c.goodput_bytes += bytes as u64;
            self.c.sender_goodput[src.index()] += bytes as u64;
        }
        self.rec(TraceEvent::Deliver {
            at: now,
            msg,
            index,
        });
        let m = &mut self.msgs[msg.index()];
        m.delivered += 1;
        let complete = m.delivered == m.packets;
        if complete {
            m.completed = Some(now);
            self.check_floor(msg, now);
        }

        if self.scenario.protocol == Protocol::Rds {
            let first_sight = !self.hosts[host.index()].rds_rx.knows(msg);
            let out = self.hosts[host.index()]
                .rds_rx
                .on_data(msg, index, total, blind, now);
            if first_sight && !out.complete {
                self.q
                    .schedule(now + self.net.rds.timeout, Ev::RdsRxTimer { msg })?;
            }
            if let Some(loss) = out.loss {
                self.c.rds_losses += 1;
                let pkt = Packet::control(
                    host,
                    src,
                    Kind::Loss {
                        msg,
                        missing: loss.missing.into_boxed_slice(),
                    },
                );
                self.push_control(host, pkt);
            }
            for g in out.grants {
                let to = self.msgs[g.msg.index()].src;
                self.push_control(
                    host,
                    Packet::control(
                        host,
                        to,
                        Kind::Grant {
                            msg: g.msg,
                            upto: g.upto,
                        },
                    ),
                );
            }
            if complete {
                self.push_control(host, Packet::control(host, src, Kind::Ack { msg }));
            }
            self.kick_nic(now, host)?;
        }
        if complete {
            self.on_complete(now, msg)?;
        }
        Ok(())
    }

    fn check_floor(&mut self, msg: MessageId, now: SimTime) {
        let m = &self.msgs[msg.index()];
        let rate = self.net.link_rate_bps as f64;
        let slack = 1.0 - self.net.clock_ppm as f64 * 1e-6;
        let last = packet_size(m.bytes, self.net.mtu, m.packets - 1, m.packets) as f64;
        let floor_ns = (m.bytes as f64 * 8e9 / rate) * slack
            + (last * 8e9 / rate)
            + 2.0 * self.net.propagation.as_nanos() as f64
            + self.net.delays.switching.min().as_nanos() as f64
            + self.net.delays.nic_fixed.as_nanos() as f64;
        let lat = (now.as_nanos() - m.created.as_nanos()) as f64;
        if lat + 1.0 < floor_ns {
            self.c.floor_violations += 1;
        }
    }

    fn on_complete(&mut self, now: SimTime, msg: MessageId) -> Result<()> {
        let m = self.msgs[msg.index()].clone();
        match (&self.plan.replies, m.tag) {
            (ReplyRule::Rpc { response_bytes }, MessageTag::Request | MessageTag::Plain) => {
                let bytes = *response_bytes;
                let flow = self.reply_flow(m.dst, m.src, m.flow as usize)?;
                self.new_message(now, flow, bytes, MessageTag::Response)?;
            }
            (
                ReplyRule::Shuffle {
                    workers,
                    layer_bytes,
                },
                MessageTag::Gradient { iteration, layer },
            ) => {
                let workers = *workers;
                let bytes = layer_bytes[layer as usize];
                let seen = self.shuffle_seen.entry((iteration, layer)).or_insert(0);
                *seen += 1;
                if *seen == workers {
                    for w in 0..workers {
                        let flow = self.reply_flow(m.dst, HostId(w), layer as usize)?;
                        self.new_message(now, flow, bytes, MessageTag::Params)?;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn reply_flow(&mut self, src: HostId, dst: HostId, hint: usize) -> Result<usize> {
        let i = self
            .plan
            .flow_between(src, dst, hint)
            .ok_or_else(|| self.invariant(format!("no flow from {src} to {dst} for a reply")))?;
        self.flows[i].sent += 1;
        Ok(i)
    }

    // ---- RDS timers -------------------------------------------------------

    fn rds_tx_timer(&mut self, now: SimTime, msg: MessageId) -> Result<()> {
        let timeout = self.net.rds.timeout;
        let Some(Some(st)) = self.rds_tx.get_mut(msg.index()) else {
            return Ok(());
        };
        match st.on_timeout(now, timeout) {
            TimerOutcome::Cancel => Ok(()),
            TimerOutcome::Rearm(t) => self.q.schedule(t, Ev::RdsTxTimer { msg }),
            TimerOutcome::Fire { action, rearm } => {
                self.c.rds_tx_timeouts += 1;
                let host = self.msgs[msg.index()].src;
                for i in action {
                    self.push_data(now, host, msg, i, None, true)?;
                }
                self.kick_nic(now, host)?;
                self.q.schedule(rearm, Ev::RdsTxTimer { msg })
            }
        }
    }

    fn rds_rx_timer(&mut self, now: SimTime, msg: MessageId) -> Result<()> {
        let (host, src) = {
            let m = &self.msgs[msg.index()];
            (m.dst, m.src)
        };
        match self.hosts[host.index()].rds_rx.on_timeout(msg, now) {
            TimerOutcome::Cancel => Ok(()),
            TimerOutcome::Rearm(t) => self.q.schedule(t, Ev::RdsRxTimer { msg }),
            TimerOutcome::Fire { action, rearm } => {
                self.c.rds_rx_timeouts += 1;
                let pkt = Packet::control(
                    host,
                    src,
                    Kind::Loss {
                        msg,
                        missing: action.missing.into_boxed_slice(),
                    },
                );
                self.push_control(host, pkt);
                self.kick_nic(now, host)?;
                self.q.schedule(rearm, Ev::RdsRxTimer { msg })
            }
        }
    }

    // ---- statistics -------------------------------------------------------

    fn note_depth(&mut self, now: SimTime, port: PortId) {
        let i = port.index();
        let d = self.ports.queue_depth(port) as u128;
        let dt = now.as_nanos() - self.qs.last_change[i];
        self.qs.depth_area[i] += d * dt as u128;
        self.qs.last_change[i] = now.as_nanos();
    }

    fn note_series(&mut self, now: SimTime, port: PortId) {
        let Some(series) = self.qs.series.as_mut() else {
            return;
        };
        let w = series.queue_bucket_ns;
        let b = now.as_nanos() / w;
        let depth = self.ports.queue_depth(port);
        if b != self.qs.cur_bucket {
            if self.qs.cur_max > 0 || !series.queue_depth.is_empty() {
                series
                    .queue_depth
                    .push((self.qs.cur_bucket * w, self.qs.cur_max));
            }
            self.qs.cur_bucket = b;
            self.qs.cur_max = (0..self.net.hosts as u16)
                .map(|p| self.ports.queue_depth(PortId(p)))
                .max()
                .unwrap_or(0);
        }
        self.qs.cur_max = self.qs.cur_max.max(depth);
    }

    fn note_drop(&mut self, now: SimTime) {
        if let Some(series) = self.qs.series.as_mut() {
            let b = (now.as_nanos() / series.drop_bucket_ns) as usize;
            if series.drops.len() <= b {
                series.drops.resize(b + 1, 0);
            }
            series.drops[b] += 1;
        }
    }

    fn in_flight(&self) -> u64 {
        let nic: usize = self
            .hosts
            .iter()
            .map(|h| h.nic.frames().filter(|p| p.is_data()).count())
            .sum();
        let ports = self.ports.frames().filter(|p| p.is_data()).count();
        let events = self
            .q
            .pending()
            .filter(|e| match e {
                Ev::SwitchProc { pkt } | Ev::HostIn { pkt } | Ev::NicFetched { pkt, .. } => {
                    pkt.is_data()
                }
                _ => false,
            })
            .count();
        (nic + ports + events) as u64
    }

    fn finish(&mut self) -> ScenarioReport {
        let final_time = self.q.now().min(self.horizon);
        for p in 0..self.net.hosts as u16 {
            self.note_depth(final_time, PortId(p));
        }
        if let Some(series) = self.qs.series.as_mut() {
            if self.qs.cur_max > 0 || !series.queue_depth.is_empty() {
                series
                    .queue_depth
                    .push((self.qs.cur_bucket * series.queue_bucket_ns, self.qs.cur_max));
            }
        }
        let elapsed = final_time.as_nanos().max(1) as u128;
        let mean_queue = self
            .qs
            .depth_area
            .iter()
            .map(|a| (*a / elapsed) as f64)
            .fold(0.0, f64::max);

        let mut lat: Vec<u64> = self
            .msgs
            .iter()
            .filter(|m| m.created < self.end_of_arrivals)
            .filter_map(|m| m.completed.map(|c| c.as_nanos() - m.created.as_nanos()))
            .collect();
        let generated_msgs = self
            .msgs
            .iter()
            .filter(|m| m.created < self.end_of_arrivals)
            .count() as u64;
        let latency = LatencySummary::from_samples(&mut lat);

        let dur = self.scenario.duration.as_secs_f64();
        let bps = |bytes: u64| {
            if dur > 0.0 {
                bytes as f64 * 8.0 / dur
            } else {
                0.0
            }
        };
        let senders: Vec<HostId> = {
            let mut s: Vec<HostId> = self.plan.sources.iter().map(|s| s.src).collect();
            s.extend(self.fixed.iter().map(|m| self.flows[m.flow].src));
            s.sort();
            s.dedup();
            s
        };
        let sender_goodput = senders
            .iter()
            .map(|h| bps(self.c.sender_goodput[h.index()]))
            .collect();

        let in_flight = self.in_flight();
        let drops = self.c.drops.buffer_overrun + self.c.drops.unsolicited_threshold;
        let accounted = self.c.packets_delivered + self.c.duplicates + drops + in_flight;
        let total_bytes = self.c.control_bytes + self.c.data_bytes;
        let regs = self.dataplane.registers();
        let auditor = self.dataplane.auditor();

        ScenarioReport {
            name: self.scenario.name.clone(),
            protocol: self.scenario.protocol.to_string(),
            pattern: self.scenario.pattern.describe(),
            seed: self.seed,
            duration_ns: self.scenario.duration.as_nanos(),
            messages_generated: generated_msgs,
            messages_completed: latency.count,
            latency,
            goodput_bps: bps(self.c.goodput_bytes),
            throughput_bps: bps(self.c.throughput_bytes),
            sender_goodput_bps: sender_goodput,
            packets_generated: self.c.packets_generated,
            packets_delivered: self.c.packets_delivered,
            packets_in_flight: in_flight,
            drops: self.c.drops.clone(),
            duplicates: self.c.duplicates,
            drop_rate: if self.c.packets_generated > 0 {
                drops as f64 / self.c.packets_generated as f64
            } else {
                0.0
            },
            max_queue_bytes: self.ports.max_depths().iter().copied().max().unwrap_or(0),
            mean_queue_bytes: mean_queue,
            control_bytes: self.c.control_bytes,
            data_bytes: self.c.data_bytes,
            overhead_fraction: if total_bytes > 0 {
                self.c.control_bytes as f64 / total_bytes as f64
            } else {
                0.0
            },
            control_per_data: if self.c.data_bytes > 0 {
                self.c.control_bytes as f64 / self.c.data_bytes as f64
            } else {
                0.0
            },
            bursts: self.c.bursts,
            unsolicited_bursts: self.c.unsolicited,
            resent_bursts: self.c.resent,
            rds_sender_timeouts: self.c.rds_tx_timeouts,
            rds_receiver_timeouts: self.c.rds_rx_timeouts,
            rds_loss_signals: self.c.rds_losses,
            events: self.q.dispatched(),
            final_time_ns: final_time.as_nanos(),
            invariants: InvariantCounters {
                audit_checks: auditor.map_or(0, |a| a.checks()),
                conservation_violations: auditor.map_or(0, |a| a.violations().len() as u64),
                rmw_violations: regs.input.rmw_violations() + regs.output.rmw_violations(),
                monotonicity_violations: self.dataplane.monotonicity_violations(),
                latency_floor_violations: self.c.floor_violations,
                closure_mismatch: self.c.packets_generated as i64 - accounted as i64,
                max_outstanding_rsv: self.c.max_outstanding,
                rds_max_outstanding_grants: self
                    .hosts
                    .iter()
                    .map(|h| h.rds_rx.max_outstanding())
                    .max()
                    .unwrap_or(0),
            },
            series: self.qs.series.take(),
        }
    }
}

/// Runs one scenario and returns its report.
pub fn simulate(net: &NetConfig, scenario: &Scenario, seed: u64) -> Result<ScenarioReport> {
    Ok(Simulation::new(net, scenario, seed)?.run()?.0)
}
