use crate::error::{Result, SimError};

/// Nearest-rank percentile of an ascending slice: the element at 1-based
/// rank `ceil(q/100 * n)`.
pub fn percentile_sorted(sorted: &[u64], q: f64) -> Result<u64> {
    if sorted.is_empty() {
        return Err(SimError::EmptySamples);
    }
    if !(q > 0.0 && q <= 100.0) {
        return Err(SimError::BadPercentile(q));
    }
    let n = sorted.len();
    // q * n / 100 is exact for the usual integer-ish q; the epsilon keeps
    // representation noise from bumping an exact rank up by one
    let rank = ((q * n as f64 / 100.0) - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Nearest-rank percentile of unsorted samples.
pub fn percentile(samples: &[u64], q: f64) -> Result<u64> {
    let mut v = samples.to_vec();
    v.sort_unstable();
    percentile_sorted(&v, q)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub p50_ns: u64,
    pub p99_ns: u64,
    pub p999_ns: u64,
    pub max_ns: u64,
    pub mean_ns: f64,
}

impl LatencySummary {
    /// Sorts `samples` in place. An empty set gives the all-zero summary.
    pub fn from_samples(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_unstable();
        let sum: u128 = samples.iter().map(|&x| x as u128).sum();
        LatencySummary {
            count: samples.len() as u64,
            p50_ns: percentile_sorted(samples, 50.0).unwrap(),
            p99_ns: percentile_sorted(samples, 99.0).unwrap(),
            p999_ns: percentile_sorted(samples, 99.9).unwrap(),
            max_ns: *samples.last().unwrap(),
            mean_ns: sum as f64 / samples.len() as f64,
        }
    }
}
