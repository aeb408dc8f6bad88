//! Uncontrolled raw Ethernet: every message is packetized and handed to the
//! NIC the moment it arrives.

use crate::error::{Result, SimError};
use crate::ids::HostId;

/// Splits `bytes` into frames of at most `mtu` bytes.
pub fn packetize(bytes: u64, mtu: u32) -> Result<Vec<u32>> {
    if bytes == 0 {
        return Err(SimError::EmptyMessage);
    }
    let full = bytes / mtu as u64;
    let rest = (bytes % mtu as u64) as u32;
    let mut out = vec![mtu; full as usize];
    if rest > 0 {
        out.push(rest);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct RawEthFlow {
    pub src: HostId,
    pub dst: HostId,
    mtu: u32,
    sent_messages: u64,
}

impl RawEthFlow {
    pub fn new(src: HostId, dst: HostId, mtu: u32) -> Self {
        RawEthFlow {
            src,
            dst,
            mtu,
            sent_messages: 0,
        }
    }

    /// Frames to enqueue at the NIC, in order. There is no pacing and no
    /// control traffic.
    pub fn raw_send(&mut self, bytes: u64) -> Result<Vec<u32>> {
        let frames = packetize(bytes, self.mtu)?;
        self.sent_messages += 1;
        Ok(frames)
    }

    pub fn sent_messages(&self) -> u64 {
        self.sent_messages
    }
}
