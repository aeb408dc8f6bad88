use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SimTime;
use crate::error::{Result, SimError};

/// A unidirectional link: rate, propagation delay and the capacity of the
/// queue feeding it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkModel {
    pub rate_bps: u64,
    pub propagation: SimTime,
    pub queue_capacity: u64,
}

impl LinkModel {
    pub fn new(rate_bps: u64, propagation: SimTime, queue_capacity: u64) -> Self {
        assert!(rate_bps > 0, "link rate must be positive");
        LinkModel {
            rate_bps,
            propagation,
            queue_capacity,
        }
    }

    /// Time to push `bytes` through this link, rounded down to whole ns.
    /// Used for delay estimates (Eq-style arithmetic), not for frame timing.
    pub fn transfer_time_floor(&self, bytes: u64) -> SimTime {
        SimTime::from_nanos(((bytes as u128 * 8 * 1_000_000_000) / self.rate_bps as u128) as u64)
    }
}

/// `ceil(bytes * 8 * 1e9 / rate)` nanoseconds.
pub fn serialization_delay(bytes: u32, link: &LinkModel) -> Result<SimTime> {
    if bytes == 0 {
        return Err(SimError::EmptyFrame);
    }
    let bits_ns = bytes as u128 * 8 * 1_000_000_000;
    let rate = link.rate_bps as u128;
    Ok(SimTime::from_nanos(bits_ns.div_ceil(rate) as u64))
}

/// Transmit clock with picosecond resolution.
///
/// Frames sent back to back keep their sub-nanosecond phase, so two links whose
/// rates differ by a few ppm drift relative to one another the way real NIC
/// clocks do. Completion events are reported on the integer-ns grid.
#[derive(Clone, Debug)]
pub struct LinkClock {
    rate_bps: u64,
    ppm: i32,
    busy_until_ps: u128,
}

impl LinkClock {
    pub fn new(rate_bps: u64, ppm: i32) -> Self {
        assert!(rate_bps > 0);
        assert!(ppm.abs() < 10_000, "clock offset out of range");
        LinkClock {
            rate_bps,
            ppm,
            busy_until_ps: 0,
        }
    }

    fn frame_ps(&self, bytes: u32) -> u128 {
        let num = bytes as u128 * 8 * 1_000_000_000_000 * 1_000_000;
        let den = self.rate_bps as u128 * (1_000_000i64 + self.ppm as i64) as u128;
        num / den
    }

    /// Starts a frame at `now` and returns the (ceil-ns) completion time. A
    /// frame that starts within the nanosecond the previous one ended is
    /// treated as back to back.
    pub fn start(&mut self, now: SimTime, bytes: u32) -> SimTime {
        let now_ps = now.as_nanos() as u128 * 1000;
        let start = if self.busy_until_ps + 1000 > now_ps {
            self.busy_until_ps.max(now_ps.saturating_sub(999))
        } else {
            now_ps
        };
        self.busy_until_ps = start + self.frame_ps(bytes);
        SimTime::from_nanos(self.busy_until_ps.div_ceil(1000) as u64)
    }
}

/// Two-class (control before data), non-preemptive FIFO transmitter.
#[derive(Debug)]
pub struct PriorityTx<F> {
    clock: LinkClock,
    control: VecDeque<(F, u32)>,
    data: VecDeque<(F, u32)>,
    in_service: Option<(F, u32, bool)>,
    data_bytes: u64,
    control_bytes: u64,
    busy_ns: u64,
}

impl<F> PriorityTx<F> {
    pub fn new(clock: LinkClock) -> Self {
        PriorityTx {
            clock,
            control: VecDeque::new(),
            data: VecDeque::new(),
            in_service: None,
            data_bytes: 0,
            control_bytes: 0,
            busy_ns: 0,
        }
    }

    pub fn push_control(&mut self, frame: F, bytes: u32) {
        self.control_bytes += bytes as u64;
        self.control.push_back((frame, bytes));
    }

    pub fn push_data(&mut self, frame: F, bytes: u32) {
        self.data_bytes += bytes as u64;
        self.data.push_back((frame, bytes));
    }

    pub fn is_busy(&self) -> bool {
        self.in_service.is_some()
    }

    /// Data bytes queued or in service.
    pub fn data_bytes(&self) -> u64 {
        self.data_bytes
    }

    pub fn control_bytes(&self) -> u64 {
        self.control_bytes
    }

    pub fn busy_ns(&self) -> u64 {
        self.busy_ns
    }

    pub fn data_backlog_frames(&self) -> usize {
        self.data.len()
    }

    /// If idle with something queued, starts the next frame and returns its
    /// completion time.
    pub fn try_start(&mut self, now: SimTime) -> Option<SimTime> {
        if self.in_service.is_some() {
            return None;
        }
        let (frame, bytes, is_data) = if let Some((f, b)) = self.control.pop_front() {
            (f, b, false)
        } else if let Some((f, b)) = self.data.pop_front() {
            (f, b, true)
        } else {
            return None;
        };
        let done = self.clock.start(now, bytes);
        self.busy_ns += done.as_nanos() - now.as_nanos();
        self.in_service = Some((frame, bytes, is_data));
        Some(done)
    }

    /// Like [`try_start`](Self::try_start), but each data frame about to
    /// start is first shown to `gate`; frames it rejects are discarded and
    /// returned in `discarded`.
    pub fn try_start_gated(
        &mut self,
        now: SimTime,
        mut gate: impl FnMut(&F) -> bool,
        discarded: &mut Vec<F>,
    ) -> Option<SimTime> {
        if self.in_service.is_none() && self.control.is_empty() {
            while let Some((f, b)) = self.data.front() {
                if gate(f) {
                    break;
                }
                let b = *b;
                let (f, _) = self.data.pop_front().expect("front exists");
                self.data_bytes -= b as u64;
                discarded.push(f);
            }
        }
        self.try_start(now)
    }

    /// Completes the frame in service.
    pub fn finish(&mut self) -> Option<F> {
        let (frame, bytes, is_data) = self.in_service.take()?;
        if is_data {
            self.data_bytes -= bytes as u64;
        } else {
            self.control_bytes -= bytes as u64;
        }
        Some(frame)
    }

    /// All frames held (queued and in service).
    pub fn frames(&self) -> impl Iterator<Item = &F> {
        self.in_service
            .iter()
            .map(|(f, _, _)| f)
            .chain(self.control.iter().map(|(f, _)| f))
            .chain(self.data.iter().map(|(f, _)| f))
    }
}
