//! Top-of-rack switch dataplane: reservation registers, GRT generation,
//! unsolicited-burst admission and a shared output buffer.
//!
//! The two register arrays are separate objects. Each packet performs at
//! most one read-modify-write on each of them, and no expression combines
//! values from both arrays; the pass counters below make that checkable.
//!
//! When a burst goes out unsolicited and is later resent on its schedule, two
//! copies cross the dataplane against one reservation. [`Settlement`] picks
//! how the registers account for them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::ids::{BurstId, PortId};
use crate::sim::{LinkClock, PriorityTx, SimTime};

/// Wire size of RSV and GRT frames.
pub const CONTROL_FRAME_BYTES: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvPacket {
    pub src: PortId,
    pub dst: PortId,
    pub demand: u32,
    pub burst_id: BurstId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrtInfo {
    pub send_timeslot: u32,
    pub recv_timeslot: u32,
    pub burst_id: BurstId,
}

/// What the dataplane sees of a data packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataHeader {
    pub src: PortId,
    pub dst: PortId,
    pub solicited: bool,
    /// Scheduled copy of a burst that already went out unsolicited. Carried
    /// in the same spare header field as the unsolicited mark.
    pub resend: bool,
    /// Used only by the conservation auditor; the dataplane ignores it.
    pub burst: Option<BurstId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataVerdict {
    Forward,
    DropUnsolicited,
}

/// Register accounting for bursts that cross the switch twice.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Settlement {
    /// The unsolicited copy settles the reservation whether it is forwarded
    /// or dropped (the threshold test reads the pre-decrement value), and a
    /// resent copy passes without touching the registers.
    #[default]
    Once,
    /// Every copy decrements on its own, floored at zero; a dropped
    /// unsolicited copy leaves the registers alone. A burst that is sent
    /// unsolicited, admitted and then resent is counted twice, so the
    /// registers run below the true backlog until the port idles.
    PerCopy,
}

/// Where data packets run their register update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegisterStage {
    /// On arrival, before the packet joins the output queue.
    Ingress,
    /// When the packet leaves the output queue. Packets waiting in the queue
    /// still hold their reservations, so the registers see backlog built by
    /// unsolicited bursts. An unsolicited packet refused here is discarded
    /// without being transmitted; a packet lost to buffer overrun is settled
    /// as if it had been dequeued.
    #[default]
    Egress,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchConfig {
    pub num_ports: u16,
    /// K: largest demand one RSV may carry.
    pub max_demand: u32,
    /// T: unsolicited packets are dropped while `outReservation[dst] > T`.
    pub unsolicited_threshold: u32,
    pub output_queue_capacity: u64,
    pub shared_buffer_capacity: u64,
    pub timeslot: SimTime,
    pub settlement: Settlement,
    pub register_stage: RegisterStage,
}

impl Default for SwitchConfig {
    fn default() -> Self {
        SwitchConfig {
            num_ports: 64,
            max_demand: 4,
            unsolicited_threshold: 60,
            // 120 us at 100 Gbps
            output_queue_capacity: 1_500_000,
            shared_buffer_capacity: 2_000_000,
            timeslot: SimTime::from_nanos(120),
            settlement: Settlement::Once,
            register_stage: RegisterStage::Egress,
        }
    }
}

/// One stateful register array.
#[derive(Clone, Debug)]
pub struct RegisterArray {
    values: Vec<u32>,
    pass: u64,
    accessed_in_pass: u64,
    violations: u64,
    ops: u64,
}

impl RegisterArray {
    fn new(n: usize) -> Self {
        RegisterArray {
            values: vec![0; n],
            pass: 1,
            accessed_in_pass: 0,
            violations: 0,
            ops: 0,
        }
    }

    fn touch(&mut self) {
        if self.accessed_in_pass == self.pass {
            self.violations += 1;
        }
        self.accessed_in_pass = self.pass;
        self.ops += 1;
    }

    fn next_pass(&mut self) {
        self.pass += 1;
    }

    /// Returns the old value and adds `v`.
    fn fetch_add(&mut self, port: PortId, v: u32) -> u32 {
        self.touch();
        let slot = &mut self.values[port.index()];
        let old = *slot;
        *slot = old.saturating_add(v);
        old
    }

    /// Decrements by one, saturating at zero. Returns the old value.
    fn fetch_dec(&mut self, port: PortId) -> u32 {
        self.touch();
        let slot = &mut self.values[port.index()];
        let old = *slot;
        *slot = old.saturating_sub(1);
        old
    }

    /// Decrements by one only if the current value is `<= limit`. Returns the
    /// old value and whether the update happened.
    fn fetch_dec_if_at_most(&mut self, port: PortId, limit: u32) -> (u32, bool) {
        self.touch();
        let slot = &mut self.values[port.index()];
        let old = *slot;
        if old <= limit {
            *slot = old.saturating_sub(1);
            (old, true)
        } else {
            (old, false)
        }
    }

    /// Control-plane read, outside the packet pipeline.
    pub fn get(&self, port: PortId) -> u32 {
        self.values[port.index()]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Packets that touched this array more than once.
    pub fn rmw_violations(&self) -> u64 {
        self.violations
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }
}

#[derive(Clone, Debug)]
pub struct ReservationRegisters {
    pub input: RegisterArray,
    pub output: RegisterArray,
}

impl ReservationRegisters {
    pub fn new(num_ports: u16) -> Self {
        ReservationRegisters {
            input: RegisterArray::new(num_ports as usize),
            output: RegisterArray::new(num_ports as usize),
        }
    }

    fn begin_packet(&mut self) {
        self.input.next_pass();
        self.output.next_pass();
    }
}

/// Online check of register conservation.
///
/// Tracks, per granted burst, how many of its packets have not yet been
/// settled. Without extra decrements the registers must equal those sums
/// exactly; under [`Settlement::PerCopy`] duplicate copies consume other
/// bursts' reservations, so once any have been seen the registers can only be
/// at or below them.
#[derive(Clone, Debug, Default)]
pub struct ConservationAuditor {
    remaining: HashMap<BurstId, (PortId, PortId, u32)>,
    expected_in: Vec<u64>,
    expected_out: Vec<u64>,
    duplicates: u64,
    checks: u64,
    violations: Vec<String>,
}

impl ConservationAuditor {
    pub fn new(num_ports: u16) -> Self {
        ConservationAuditor {
            expected_in: vec![0; num_ports as usize],
            expected_out: vec![0; num_ports as usize],
            ..Default::default()
        }
    }

    fn on_grant(&mut self, rsv: &RsvPacket) {
        self.remaining
            .insert(rsv.burst_id, (rsv.src, rsv.dst, rsv.demand));
        self.expected_in[rsv.src.index()] += rsv.demand as u64;
        self.expected_out[rsv.dst.index()] += rsv.demand as u64;
    }

    fn on_decrement(&mut self, hdr: &DataHeader) {
        let matched = hdr.burst.and_then(|b| self.remaining.get_mut(&b));
        match matched {
            Some((src, dst, left)) if *left > 0 => {
                *left -= 1;
                self.expected_in[src.index()] -= 1;
                self.expected_out[dst.index()] -= 1;
                if *left == 0 {
                    let b = hdr.burst.unwrap();
                    self.remaining.remove(&b);
                }
            }
            _ => self.duplicates += 1,
        }
    }

    fn check(&mut self, regs: &ReservationRegisters, ports: &[PortId]) {
        self.checks += 1;
        for &p in ports {
            let (have_in, want_in) = (regs.input.get(p) as u64, self.expected_in[p.index()]);
            let (have_out, want_out) = (regs.output.get(p) as u64, self.expected_out[p.index()]);
            let ok = if self.duplicates == 0 {
                have_in == want_in && have_out == want_out
            } else {
                have_in <= want_in && have_out <= want_out
            };
            if !ok && self.violations.len() < 16 {
                self.violations.push(format!(
                    "port {p}: in={have_in} (expected {want_in}), out={have_out} (expected {want_out}), duplicates={}",
                    self.duplicates
                ));
            }
        }
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn checks(&self) -> u64 {
        self.checks
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }
}

/// Dataplane state and the logic run for every packet.
#[derive(Clone, Debug)]
pub struct Pl2Dataplane {
    cfg: SwitchConfig,
    regs: ReservationRegisters,
    auditor: Option<ConservationAuditor>,
    last_send_slot: Vec<Option<u32>>,
    monotonicity_violations: u64,
}

impl Pl2Dataplane {
    pub fn new(cfg: SwitchConfig, audit: bool) -> Self {
        Pl2Dataplane {
            regs: ReservationRegisters::new(cfg.num_ports),
            auditor: audit.then(|| ConservationAuditor::new(cfg.num_ports)),
            last_send_slot: vec![None; cfg.num_ports as usize],
            monotonicity_violations: 0,
            cfg,
        }
    }

    pub fn config(&self) -> &SwitchConfig {
        &self.cfg
    }

    pub fn registers(&self) -> &ReservationRegisters {
        &self.regs
    }

    pub fn auditor(&self) -> Option<&ConservationAuditor> {
        self.auditor.as_ref()
    }

    /// GRTs on one input port whose send slot went down without an
    /// intervening decrement on that port.
    pub fn monotonicity_violations(&self) -> u64 {
        self.monotonicity_violations
    }

    /// Reserves `demand` slots on both ports and returns the pre-increment
    /// values.
    pub fn handle_rsv(&mut self, rsv: &RsvPacket) -> Result<GrtInfo> {
        if rsv.demand == 0 || rsv.demand > self.cfg.max_demand {
            return Err(SimError::MalformedRsv {
                demand: rsv.demand,
                max: self.cfg.max_demand,
            });
        }
        self.regs.begin_packet();
        let send_timeslot = self.regs.input.fetch_add(rsv.src, rsv.demand);
        let recv_timeslot = self.regs.output.fetch_add(rsv.dst, rsv.demand);

        let last = &mut self.last_send_slot[rsv.src.index()];
        if matches!(*last, Some(prev) if send_timeslot < prev) {
            self.monotonicity_violations += 1;
        }
        *last = Some(send_timeslot);

        if let Some(a) = self.auditor.as_mut() {
            a.on_grant(rsv);
            a.check(&self.regs, &[rsv.src, rsv.dst]);
        }
        Ok(GrtInfo {
            send_timeslot,
            recv_timeslot,
            burst_id: rsv.burst_id,
        })
    }

    /// Register update for a data packet, run once per packet at the
    /// configured [`RegisterStage`].
    pub fn handle_data(&mut self, hdr: &DataHeader) -> DataVerdict {
        self.regs.begin_packet();
        let once = self.cfg.settlement == Settlement::Once;
        let (verdict, decremented) = if hdr.solicited && hdr.resend && once {
            (DataVerdict::Forward, false)
        } else if hdr.solicited {
            self.regs.output.fetch_dec(hdr.dst);
            self.regs.input.fetch_dec(hdr.src);
            (DataVerdict::Forward, true)
        } else if once {
            let old = self.regs.output.fetch_dec(hdr.dst);
            self.regs.input.fetch_dec(hdr.src);
            let verdict = if old <= self.cfg.unsolicited_threshold {
                DataVerdict::Forward
            } else {
                DataVerdict::DropUnsolicited
            };
            (verdict, true)
        } else {
            let (_, admitted) = self
                .regs
                .output
                .fetch_dec_if_at_most(hdr.dst, self.cfg.unsolicited_threshold);
            if admitted {
                self.regs.input.fetch_dec(hdr.src);
                (DataVerdict::Forward, true)
            } else {
                (DataVerdict::DropUnsolicited, false)
            }
        };
        if decremented {
            self.last_send_slot[hdr.src.index()] = None;
            if let Some(a) = self.auditor.as_mut() {
                a.on_decrement(hdr);
                a.check(&self.regs, &[hdr.src, hdr.dst]);
            }
        }
        verdict
    }
}

/// Output ports with a per-port cap and a shared buffer pool. Control frames
/// use the priority class and bypass buffer admission.
#[derive(Debug)]
pub struct OutputPorts<F> {
    ports: Vec<PriorityTx<F>>,
    per_port_cap: u64,
    shared_cap: u64,
    shared_used: u64,
    max_depth: Vec<u64>,
    max_shared: u64,
}

impl<F> OutputPorts<F> {
    pub fn new(cfg: &SwitchConfig, rate_bps: u64) -> Self {
        OutputPorts {
            ports: (0..cfg.num_ports)
                .map(|_| PriorityTx::new(LinkClock::new(rate_bps, 0)))
                .collect(),
            per_port_cap: cfg.output_queue_capacity,
            shared_cap: cfg.shared_buffer_capacity,
            shared_used: 0,
            max_depth: vec![0; cfg.num_ports as usize],
            max_shared: 0,
        }
    }

    /// Enqueues a data frame, or hands it back if either buffer limit would
    /// be exceeded.
    pub fn admit(&mut self, dst: PortId, frame: F, bytes: u32) -> std::result::Result<(), F> {
        let port = &mut self.ports[dst.index()];
        let b = bytes as u64;
        if port.data_bytes() + b > self.per_port_cap || self.shared_used + b > self.shared_cap {
            return Err(frame);
        }
        port.push_data(frame, bytes);
        self.shared_used += b;
        let depth = port.data_bytes();
        let m = &mut self.max_depth[dst.index()];
        *m = (*m).max(depth);
        self.max_shared = self.max_shared.max(self.shared_used);
        Ok(())
    }

    pub fn push_control(&mut self, dst: PortId, frame: F, bytes: u32) {
        self.ports[dst.index()].push_control(frame, bytes);
    }

    pub fn try_start(&mut self, port: PortId, now: SimTime) -> Option<SimTime> {
        self.ports[port.index()].try_start(now)
    }

    /// Starts the next frame, first discarding data frames that `gate`
    /// rejects (see [`PriorityTx::try_start_gated`]).
    pub fn try_start_gated(
        &mut self,
        port: PortId,
        now: SimTime,
        gate: impl FnMut(&F) -> bool,
        discarded: &mut Vec<F>,
    ) -> Option<SimTime> {
        let p = &mut self.ports[port.index()];
        let before = p.data_bytes();
        let done = p.try_start_gated(now, gate, discarded);
        self.shared_used -= before - p.data_bytes();
        done
    }

    pub fn finish(&mut self, port: PortId) -> Option<F> {
        let p = &mut self.ports[port.index()];
        let before = p.data_bytes();
        let f = p.finish();
        self.shared_used -= before - p.data_bytes();
        f
    }

    /// Instantaneous data occupancy of `dst`'s output queue, in bytes.
    pub fn queue_depth(&self, dst: PortId) -> u64 {
        self.ports[dst.index()].data_bytes()
    }

    pub fn max_depth(&self, dst: PortId) -> u64 {
        self.max_depth[dst.index()]
    }

    pub fn max_depths(&self) -> &[u64] {
        &self.max_depth
    }

    pub fn shared_used(&self) -> u64 {
        self.shared_used
    }

    pub fn max_shared(&self) -> u64 {
        self.max_shared
    }

    pub fn busy_ns(&self, port: PortId) -> u64 {
        self.ports[port.index()].busy_ns()
    }

    pub fn frames(&self) -> impl Iterator<Item = &F> {
        self.ports.iter().flat_map(|p| p.frames())
    }
}
