//! Receiver-driven scheme (RDS).
//!
//! Senders push the first bandwidth-delay product of every message blindly.
//! Receivers grant the rest in batches of up to four packets, one message at a
//! time in arrival order, report sequence gaps immediately, and fall back to a
//! 1 ms timeout when nothing arrives. Senders resend the blind window when
//! their own 1 ms timer expires before the receiver has said anything about
//! the message; after the first grant or loss report, recovery is left to the
//! receiver.

use std::collections::{HashMap, VecDeque};

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ids::MessageId;
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdsConfig {
    /// Bytes sent without a grant (61 KiB).
    pub blind_bytes: u64,
    /// Packets authorized per grant decision.
    pub grant_batch: u32,
    /// Granted-but-unreceived packets a receiver allows at once.
    pub grant_window: u32,
    pub timeout: SimTime,
}

impl Default for RdsConfig {
    fn default() -> Self {
        RdsConfig {
            blind_bytes: 61 * 1024,
            grant_batch: 4,
            grant_window: 42,
            timeout: SimTime::from_millis(1),
        }
    }
}

/// Number of leading packets that fit in the blind budget (at least one).
pub fn blind_count(packets: &[u32], blind_bytes: u64) -> u32 {
    let mut sum = 0u64;
    let mut n = 0u32;
    for &p in packets {
        if sum + p as u64 > blind_bytes {
            break;
        }
        sum += p as u64;
        n += 1;
    }
    n.max(1).min(packets.len() as u32)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LossSignal {
    pub msg: MessageId,
    pub missing: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TimerOutcome<T> {
    /// Nothing left to guard.
    Cancel,
    /// There was progress; check again at the given time.
    Rearm(SimTime),
    /// Timed out: act, and check again later.
    Fire { action: T, rearm: SimTime },
}

#[derive(Clone, Debug)]
pub struct RdsSenderState {
    pub msg: MessageId,
    total: u32,
    blind: u32,
    authorized: u32,
    sent_upto: u32,
    acked: bool,
    heard: bool,
    last_activity: SimTime,
}

impl RdsSenderState {
    pub fn new(msg: MessageId, packets: &[u32], cfg: &RdsConfig, now: SimTime) -> Self {
        let blind = blind_count(packets, cfg.blind_bytes);
        RdsSenderState {
            msg,
            total: packets.len() as u32,
            blind,
            authorized: blind,
            sent_upto: 0,
            acked: false,
            heard: false,
            last_activity: now,
        }
    }

    pub fn blind(&self) -> u32 {
        self.blind
    }

    pub fn is_acked(&self) -> bool {
        self.acked
    }

    /// Packets that depart with no receiver interaction.
    pub fn start(&mut self, now: SimTime) -> std::ops::Range<u32> {
        self.last_activity = now;
        self.sent_upto = self.blind;
        0..self.blind
    }

    /// A grant authorizes every index below `upto`.
    pub fn on_grant(&mut self, upto: u32, now: SimTime) -> std::ops::Range<u32> {
        self.last_activity = now;
        self.heard = true;
        self.authorized = self.authorized.max(upto.min(self.total));
        let from = self.sent_upto;
        self.sent_upto = self.sent_upto.max(self.authorized);
        from..self.sent_upto
    }

    pub fn on_loss(&mut self, missing: &[u32], now: SimTime) -> Vec<u32> {
        self.last_activity = now;
        self.heard = true;
        missing
            .iter()
            .copied()
            .filter(|&i| i < self.sent_upto)
            .collect()
    }

    pub fn on_ack(&mut self, now: SimTime) {
        self.acked = true;
        self.last_activity = now;
    }

    /// Sender-side timer. Firing resends the blind window.
    pub fn on_timeout(&mut self, now: SimTime, timeout: SimTime) -> TimerOutcome<Vec<u32>> {
        if self.acked || self.heard {
            return TimerOutcome::Cancel;
        }
        let due = self.last_activity + timeout;
        if now < due {
            return TimerOutcome::Rearm(due);
        }
        self.last_activity = now;
        TimerOutcome::Fire {
            action: (0..self.blind).collect(),
            rearm: now + timeout,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RdsReceiverState {
    total: u32,
    received: BitVec<u64, Lsb0>,
    received_count: u32,
    highest: Option<u32>,
    authorized: u32,
    blind: u32,
    last_progress: SimTime,
}

impl RdsReceiverState {
    pub fn new(total: u32, blind: u32, now: SimTime) -> Self {
        RdsReceiverState {
            total,
            received: bitvec![u64, Lsb0; 0; total as usize],
            received_count: 0,
            highest: None,
            authorized: blind,
            blind,
            last_progress: now,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.received_count == self.total
    }

    fn missing_below(&self, upto: u32) -> Vec<u32> {
        (0..upto.min(self.total))
            .filter(|&i| !self.received[i as usize])
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grant {
    pub msg: MessageId,
    /// Every index below this is authorized.
    pub upto: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RxOutcome {
    /// First copy of this packet.
    pub new: bool,
    pub complete: bool,
    pub loss: Option<LossSignal>,
    pub grants: Vec<Grant>,
}

/// Receiver side of one host: per-message reassembly plus a FIFO grant
/// scheduler shared by all messages arriving at this host.
#[derive(Clone, Debug)]
pub struct RdsReceiver {
    cfg: RdsConfig,
    msgs: HashMap<MessageId, RdsReceiverState>,
    fifo: VecDeque<MessageId>,
    outstanding: u32,
    max_outstanding: u32,
}

impl RdsReceiver {
    pub fn new(cfg: RdsConfig) -> Self {
        RdsReceiver {
            cfg,
            msgs: HashMap::new(),
            fifo: VecDeque::new(),
            outstanding: 0,
            max_outstanding: 0,
        }
    }

    pub fn outstanding_grants(&self) -> u32 {
        self.outstanding
    }

    /// Largest number of granted-but-unreceived packets ever observed.
    pub fn max_outstanding(&self) -> u32 {
        self.max_outstanding
    }

    pub fn knows(&self, msg: MessageId) -> bool {
        self.msgs.contains_key(&msg)
    }

    /// Handles packet `index` of `msg` (`total` packets, of which `blind` were
    /// sent without grants). Returns `None` for a message first seen only
    /// when a second registration races with completion; callers drop those.
    pub fn on_data(
        &mut self,
        msg: MessageId,
        index: u32,
        total: u32,
        blind: u32,
        now: SimTime,
    ) -> RxOutcome {
        let mut out = RxOutcome::default();
        let first_sight = !self.msgs.contains_key(&msg);
        let st = self
            .msgs
            .entry(msg)
            .or_insert_with(|| RdsReceiverState::new(total, blind, now));
        if first_sight && total > blind {
            self.fifo.push_back(msg);
        }
        let i = index as usize;
        if st.received[i] {
            return out;
        }
        st.received.set(i, true);
        st.received_count += 1;
        st.last_progress = now;
        out.new = true;
        if index >= st.blind && index < st.authorized {
            self.outstanding = self.outstanding.saturating_sub(1);
        }

        let next_expected = st.highest.map_or(0, |h| h + 1);
        if index > next_expected {
            let missing: Vec<u32> = (next_expected..index)
                .filter(|&j| !st.received[j as usize])
                .collect();
            if !missing.is_empty() {
                out.loss = Some(LossSignal { msg, missing });
            }
        }
        st.highest = Some(st.highest.map_or(index, |h| h.max(index)));

        if st.is_complete() {
            out.complete = true;
            self.msgs.remove(&msg);
            self.fifo.retain(|m| *m != msg);
        }
        out.grants = self.schedule_grants();
        out
    }

    fn schedule_grants(&mut self) -> Vec<Grant> {
        let mut grants = Vec::new();
        while let Some(&head) = self.fifo.front() {
            let st = self.msgs.get_mut(&head).expect("fifo entry without state");
            let remaining = st.total - st.authorized;
            if remaining == 0 {
                self.fifo.pop_front();
                continue;
            }
            let free = self.cfg.grant_window.saturating_sub(self.outstanding);
            let n = self.cfg.grant_batch.min(remaining).min(free);
            if n == 0 || (n < self.cfg.grant_batch && n < remaining) {
                break;
            }
            st.authorized += n;
            self.outstanding += n;
            self.max_outstanding = self.max_outstanding.max(self.outstanding);
            grants.push(Grant {
                msg: head,
                upto: st.authorized,
            });
        }
        grants
    }

    /// Receiver-side timer for `msg`. Firing reports every authorized packet
    /// still missing.
    pub fn on_timeout(&mut self, msg: MessageId, now: SimTime) -> TimerOutcome<LossSignal> {
        let timeout = self.cfg.timeout;
        let Some(st) = self.msgs.get_mut(&msg) else {
            return TimerOutcome::Cancel;
        };
        let due = st.last_progress + timeout;
        if now < due {
            return TimerOutcome::Rearm(due);
        }
        let missing = st.missing_below(st.authorized);
        st.last_progress = now;
        if missing.is_empty() {
            return TimerOutcome::Rearm(now + timeout);
        }
        TimerOutcome::Fire {
            action: LossSignal { msg, missing },
            rearm: now + timeout,
        }
    }
}
