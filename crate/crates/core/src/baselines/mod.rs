//! Comparison transports: raw Ethernet and a receiver-driven scheme.

pub mod raw;
pub mod rds;

pub use raw::{packetize, RawEthFlow};
pub use rds::{
    blind_count, Grant, LossSignal, RdsConfig, RdsReceiver, RdsReceiverState, RdsSenderState,
    RxOutcome, TimerOutcome,
};
