//! Hardware latency distributions.
//!
//! The RSV-GRT exchange is only characterised by its minimum, median and
//! maximum. The default shape is a shifted lognormal anchored on those three
//! points: `min + (median - min) * exp(sigma * Z)` with `Z ~ N(0, 1)`, clamped
//! at `max`. Its median is exactly `median`, and `sigma` places `max` at a
//! chosen upper quantile.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{RngStream, SimTime};

/// Standard normal quantile for a one-in-a-million exceedance.
pub const Z_ONE_IN_A_MILLION: f64 = 4.753_424_3;
/// Standard normal quantile for the 99.99th percentile.
pub const Z_9999: f64 = 3.719_016_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayDist {
    Constant {
        ns: u64,
    },
    Anchored {
        min_ns: u64,
        median_ns: u64,
        max_ns: u64,
        sigma: f64,
    },
}

impl DelayDist {
    pub fn constant(t: SimTime) -> Self {
        DelayDist::Constant { ns: t.as_nanos() }
    }

    /// Anchored shape whose `max` falls at the standard-normal quantile
    /// `tail_z`.
    pub fn anchored(min: SimTime, median: SimTime, max: SimTime, tail_z: f64) -> Self {
        let (lo, mid, hi) = (min.as_nanos(), median.as_nanos(), max.as_nanos());
        assert!(lo < mid && mid < hi, "need min < median < max");
        let sigma = ((hi - lo) as f64 / (mid - lo) as f64).ln() / tail_z;
        DelayDist::Anchored {
            min_ns: lo,
            median_ns: mid,
            max_ns: hi,
            sigma,
        }
    }

    /// NIC-to-NIC exchange: 1 us / 1.06 us / 14 us, max at 1e-6.
    pub fn default_rsv_grt() -> Self {
        Self::anchored(
            SimTime::from_nanos(1000),
            SimTime::from_nanos(1060),
            SimTime::from_nanos(14_000),
            Z_ONE_IN_A_MILLION,
        )
    }

    /// Switching delay with jitter: 346 / 347 / 508 ns, max at the 99.99th
    /// percentile.
    pub fn jittered_switching() -> Self {
        Self::anchored(
            SimTime::from_nanos(346),
            SimTime::from_nanos(347),
            SimTime::from_nanos(508),
            Z_9999,
        )
    }

    pub fn sample(&self, rng: &mut RngStream) -> SimTime {
        match *self {
            DelayDist::Constant { ns } => SimTime::from_nanos(ns),
            DelayDist::Anchored {
                min_ns,
                median_ns,
                max_ns,
                sigma,
            } => {
                let z: f64 = StandardNormal.sample(rng);
                let v = min_ns as f64 + (median_ns - min_ns) as f64 * (sigma * z).exp();
                SimTime::from_nanos((v.round() as u64).clamp(min_ns, max_ns))
            }
        }
    }

    pub fn median(&self) -> SimTime {
        match *self {
            DelayDist::Constant { ns } => SimTime::from_nanos(ns),
            DelayDist::Anchored { median_ns, .. } => SimTime::from_nanos(median_ns),
        }
    }

    pub fn min(&self) -> SimTime {
        match *self {
            DelayDist::Constant { ns } => SimTime::from_nanos(ns),
            DelayDist::Anchored { min_ns, .. } => SimTime::from_nanos(min_ns),
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            DelayDist::Constant { .. } => true,
            DelayDist::Anchored {
                min_ns,
                median_ns,
                max_ns,
                sigma,
            } => min_ns < median_ns && median_ns < max_ns && sigma.is_finite() && sigma > 0.0,
        }
    }
}

/// Latencies applied to every frame that are not link serialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    /// Full NIC-to-NIC RSV-GRT exchange; each direction takes half of a sample.
    pub rsv_grt_exchange: DelayDist,
    /// Ingress-to-egress pipeline latency of the switch.
    pub switching: DelayDist,
    /// NIC/DMA latency on each side of a data path.
    pub nic_fixed: SimTime,
}

impl Default for DelayModel {
    fn default() -> Self {
        DelayModel {
            rsv_grt_exchange: DelayDist::default_rsv_grt(),
            switching: DelayDist::constant(SimTime::from_nanos(347)),
            nic_fixed: SimTime::from_nanos(60),
        }
    }
}

impl DelayModel {
    /// Every distribution degenerate; used by hand-checked scenarios.
    pub fn constant(rsv_grt: SimTime, switching: SimTime, nic_fixed: SimTime) -> Self {
        DelayModel {
            rsv_grt_exchange: DelayDist::constant(rsv_grt),
            switching: DelayDist::constant(switching),
            nic_fixed,
        }
    }

    pub fn sample_rsv_grt_delay(&self, rng: &mut RngStream) -> SimTime {
        self.rsv_grt_exchange.sample(rng)
    }

    pub fn sample_switching_delay(&self, rng: &mut RngStream) -> SimTime {
        self.switching.sample(rng)
    }
}
