//! Sender and receiver endpoint logic.
//!
//! The sender keeps one [`HostFlowState`] per flow and follows the
//! scheduling rule: send an RSV for every burst, send the burst right away
//! (unsolicited) when the last chosen timeslot was below `t` and recent, and
//! otherwise transmit it once the GRT arrives, after [`waiting_time`].

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::ids::{BurstId, HostId};
use crate::sim::SimTime;
use crate::switch::GrtInfo;

/// How recent the last GRT must be for an unsolicited burst.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RecencyWindow {
    Fixed(SimTime),
    /// A multiple of the flow's running-median exchange delay.
    MedianMultiple(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerParams {
    /// K: maximum packets per burst.
    pub k: u32,
    /// t: unsolicited threshold in timeslots.
    pub t: u32,
    pub recency_window: RecencyWindow,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        SchedulerParams {
            k: 4,
            t: 15,
            recency_window: RecencyWindow::MedianMultiple(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Burst {
    pub id: BurstId,
    pub src: HostId,
    pub dst: HostId,
    pub packets: Vec<u32>,
    pub created_at: SimTime,
}

impl Burst {
    pub fn new(
        id: BurstId,
        src: HostId,
        dst: HostId,
        packets: Vec<u32>,
        created_at: SimTime,
        k: u32,
        mtu: u32,
    ) -> Result<Self> {
        if packets.is_empty() || packets.len() > k as usize {
            return Err(SimError::InvalidBurst(format!(
                "{} packets, expected 1..={k}",
                packets.len()
            )));
        }
        if let Some(bad) = packets.iter().find(|&&s| s == 0 || s > mtu) {
            return Err(SimError::InvalidBurst(format!(
                "packet of {bad} B outside (0, {mtu}]"
            )));
        }
        Ok(Burst {
            id,
            src,
            dst,
            packets,
            created_at,
        })
    }

    pub fn demand(&self) -> u32 {
        self.packets.len() as u32
    }

    pub fn bytes(&self) -> u64 {
        self.packets.iter().map(|&s| s as u64).sum()
    }
}

/// The timeslot a sender targets: the later of the two reservations.
pub fn chosen_timeslot(g: &GrtInfo) -> u32 {
    g.send_timeslot.max(g.recv_timeslot)
}

/// Signed waiting time before clamping, in ns.
pub fn waiting_time_unclamped(
    chosen: u32,
    rsv_grt_delay: SimTime,
    nic_pending_bytes: u64,
    timeslot: SimTime,
    line_rate_bps: u64,
) -> i128 {
    let timeslot_wait = chosen as i128 * timeslot.as_nanos() as i128;
    let pending = (nic_pending_bytes as i128 * 8 * 1_000_000_000) / line_rate_bps as i128;
    timeslot_wait - rsv_grt_delay.as_nanos() as i128 - pending
}

/// `max(0, chosen * timeslot - rsvGrtDelay - pending_bytes * 8 / rate)`.
pub fn waiting_time(
    chosen: u32,
    rsv_grt_delay: SimTime,
    nic_pending_bytes: u64,
    timeslot: SimTime,
    line_rate_bps: u64,
) -> SimTime {
    let w = waiting_time_unclamped(
        chosen,
        rsv_grt_delay,
        nic_pending_bytes,
        timeslot,
        line_rate_bps,
    );
    SimTime::from_nanos(w.max(0) as u64)
}

/// Streaming median estimate of the RSV-GRT exchange delay.
///
/// Each sample moves the estimate towards it by a step proportional to the
/// current estimate (1/16), so a single outlier barely shifts it while a
/// persistent change is tracked within a few dozen exchanges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DelayEstimator {
    estimate: Option<u64>,
}

impl DelayEstimator {
    pub fn update(&mut self, sample: SimTime) {
        let x = sample.as_nanos();
        self.estimate = Some(match self.estimate {
            None => x,
            Some(est) => {
                let step = (est / 16).max(1);
                if x > est {
                    est + step.min(x - est)
                } else if x < est {
                    est - step.min(est - x)
                } else {
                    est
                }
            }
        });
    }

    pub fn estimate(&self) -> Option<SimTime> {
        self.estimate.map(SimTime::from_nanos)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Outstanding {
    pub burst: BurstId,
    pub rsv_sent_at: SimTime,
    pub unsolicited: bool,
}

/// Per-flow scheduling memory.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HostFlowState {
    /// `None` until the first GRT (the `-1` initial value).
    pub last_chosen: Option<u32>,
    pub last_response: SimTime,
    pub outstanding: Option<Outstanding>,
    pub delay: DelayEstimator,
}

impl HostFlowState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn recency_window(&self, params: &SchedulerParams) -> Option<SimTime> {
        match params.recency_window {
            RecencyWindow::Fixed(w) => Some(w),
            RecencyWindow::MedianMultiple(m) => self.delay.estimate().map(|d| d * m as u64),
        }
    }

    /// Whether a burst scheduled now may go out unsolicited.
    pub fn unsolicited_allowed(&self, params: &SchedulerParams, now: SimTime) -> bool {
        let below = matches!(self.last_chosen, Some(c) if c < params.t);
        let recent = self
            .recency_window(params)
            .is_some_and(|w| now.saturating_sub(self.last_response) <= w);
        below && recent
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransmitPlan {
    /// Send the RSV and wait for the GRT.
    RsvOnly,
    /// Send the RSV and the burst immediately, marked unsolicited.
    RsvWithUnsolicited,
}

/// Starts the RSV-GRT exchange for `burst`.
pub fn schedule_burst(
    state: &mut HostFlowState,
    params: &SchedulerParams,
    flow: usize,
    burst: BurstId,
    now: SimTime,
) -> Result<TransmitPlan> {
    if let Some(o) = state.outstanding {
        return Err(SimError::OutstandingRsv {
            flow,
            burst: o.burst.0,
        });
    }
    let unsolicited = state.unsolicited_allowed(params, now);
    state.outstanding = Some(Outstanding {
        burst,
        rsv_sent_at: now,
        unsolicited,
    });
    Ok(if unsolicited {
        TransmitPlan::RsvWithUnsolicited
    } else {
        TransmitPlan::RsvOnly
    })
}

/// Inputs to the waiting-time computation that come from the NIC and link.
#[derive(Clone, Copy, Debug)]
pub struct WaitContext {
    pub nic_pending_bytes: u64,
    pub timeslot: SimTime,
    pub line_rate_bps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrtAction {
    /// Scheduled transmission of a burst that has not been sent yet.
    Transmit { chosen: u32, wait: SimTime },
    /// The unsolicited copy may have been dropped: send the burst again at
    /// its reserved slot.
    Resend { chosen: u32, wait: SimTime },
    /// The unsolicited copy stands.
    Done { chosen: u32 },
}

/// Handles the GRT answering the flow's outstanding RSV.
pub fn on_grt(
    state: &mut HostFlowState,
    params: &SchedulerParams,
    grt: &GrtInfo,
    now: SimTime,
    ctx: WaitContext,
) -> Result<GrtAction> {
    let out = match state.outstanding {
        Some(o) if o.burst == grt.burst_id => o,
        _ => return Err(SimError::UnknownGrt(grt.burst_id.0)),
    };
    state.delay.update(now.saturating_sub(out.rsv_sent_at));
    let rsv_grt_delay = state.delay.estimate().unwrap_or_default();

    let chosen = chosen_timeslot(grt);
    let wait = || {
        waiting_time(
            chosen,
            rsv_grt_delay,
            ctx.nic_pending_bytes,
            ctx.timeslot,
            ctx.line_rate_bps,
        )
    };
    let last_below_t = state.last_chosen.is_some_and(|c| c < params.t);
    let action = if out.unsolicited {
        if chosen > params.t && last_below_t {
            GrtAction::Resend {
                chosen,
                wait: wait(),
            }
        } else {
            GrtAction::Done { chosen }
        }
    } else {
        GrtAction::Transmit {
            chosen,
            wait: wait(),
        }
    };

    state.last_chosen = Some(chosen);
    state.last_response = now;
    state.outstanding = None;
    Ok(action)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Delivered,
    Suppressed,
}

/// First-copy-wins delivery record keyed by dense ids (burst or message).
#[derive(Clone, Debug, Default)]
pub struct ReceiverLedger {
    slots: Vec<Option<BitVec<u64, Lsb0>>>,
    delivered: u64,
    suppressed: u64,
}

impl ReceiverLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records packet `index` of the unit `key` (which has `total` packets).
    pub fn deliver(&mut self, key: u64, index: u32, total: u32) -> Delivery {
        let k = key as usize;
        if self.slots.len() <= k {
            self.slots.resize(k + 1, None);
        }
        let bits = self.slots[k].get_or_insert_with(|| bitvec![u64, Lsb0; 0; total as usize]);
        let i = index as usize;
        if bits.len() <= i {
            bits.resize(i + 1, false);
        }
        if bits[i] {
            self.suppressed += 1;
            Delivery::Suppressed
        } else {
            bits.set(i, true);
            self.delivered += 1;
            Delivery::Delivered
        }
    }

    pub fn is_delivered(&self, key: u64, index: u32) -> bool {
        self.slots
            .get(key as usize)
            .and_then(|s| s.as_ref())
            .and_then(|b| b.get(index as usize).map(|x| *x))
            .unwrap_or(false)
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }
}
