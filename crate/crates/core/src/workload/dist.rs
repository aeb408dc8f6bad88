use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::sim::RngStream;

/// Step-function CDF over message sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    /// `(size_bytes, cumulative_probability)`, both strictly increasing, the
    /// last probability exactly 1.0.
    pub points: Vec<(u64, f64)>,
}

impl EmpiricalCdf {
    pub fn new(points: Vec<(u64, f64)>) -> Result<Self> {
        let cdf = EmpiricalCdf { points };
        cdf.validate()?;
        Ok(cdf)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SimError::Distribution(m));
        if self.points.is_empty() {
            return bad("empty CDF".into());
        }
        let mut prev: Option<(u64, f64)> = None;
        for &(s, p) in &self.points {
            if s == 0 {
                return bad("sizes must be positive".into());
            }
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("probability {p} outside (0, 1]"));
            }
            if let Some((ps, pp)) = prev {
                if s <= ps || p <= pp {
                    return bad(format!("not increasing at size {s}"));
                }
            }
            prev = Some((s, p));
        }
        if (self.points.last().unwrap().1 - 1.0).abs() > 1e-9 {
            return bad("CDF does not reach 1.0".into());
        }
        Ok(())
    }

    /// Smallest size whose cumulative probability is at least `u`.
    pub fn inverse(&self, u: f64) -> u64 {
        let i = self.points.partition_point(|&(_, p)| p < u);
        self.points[i.min(self.points.len() - 1)].0
    }

    pub fn mean(&self) -> f64 {
        let mut prev = 0.0;
        let mut m = 0.0;
        for &(s, p) in &self.points {
            m += s as f64 * (p - prev);
            prev = p;
        }
        m
    }

    pub fn max(&self) -> u64 {
        self.points.last().map_or(0, |p| p.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MessageSizeDist {
    Fixed {
        bytes: u64,
    },
    /// Inclusive range.
    Uniform {
        min: u64,
        max: u64,
    },
    /// `exp(N(mu, sigma))` bytes, rounded, at least 1.
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    Bimodal {
        small: u64,
        large: u64,
        p_large: f64,
    },
    Empirical(EmpiricalCdf),
}

impl MessageSizeDist {
    /// Lognormal with the given mean and shape.
    pub fn lognormal_with_mean(mean: f64, sigma: f64) -> Self {
        MessageSizeDist::LogNormal {
            mu: mean.ln() - sigma * sigma / 2.0,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Distribution(m.to_string()));
        match self {
            MessageSizeDist::Fixed { bytes } if *bytes == 0 => bad("fixed size must be positive"),
            MessageSizeDist::Uniform { min, max } if *min == 0 || min > max => {
                bad("uniform needs 1 <= min <= max")
            }
            MessageSizeDist::LogNormal { mu, sigma }
                if !mu.is_finite() || !sigma.is_finite() || *sigma < 0.0 =>
            {
                bad("lognormal needs finite mu and sigma >= 0")
            }
            MessageSizeDist::Bimodal {
                small,
                large,
                p_large,
            } if *small == 0 || *large == 0 || !(0.0..=1.0).contains(p_large) => {
                bad("bimodal needs positive sizes and p_large in [0, 1]")
            }
            MessageSizeDist::Empirical(cdf) => cdf.validate(),
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        match self {
            MessageSizeDist::Fixed { bytes } => *bytes,
            MessageSizeDist::Uniform { min, max } => rng.random_range(*min..=*max),
            MessageSizeDist::LogNormal { mu, sigma } => {
                let d = LogNormal::new(*mu, *sigma).expect("validated lognormal");
                (d.sample(rng).round() as u64).max(1)
            }
            MessageSizeDist::Bimodal {
                small,
                large,
                p_large,
            } => {
                if rng.unit() < *p_large {
                    *large
                } else {
                    *small
                }
            }
            MessageSizeDist::Empirical(cdf) => {
                // unit() is in [0, 1); map to (0, 1] so u = 0 never selects
                // below the first step
                cdf.inverse(1.0 - rng.unit())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            MessageSizeDist::Fixed { bytes } => *bytes as f64,
            MessageSizeDist::Uniform { min, max } => (*min + *max) as f64 / 2.0,
            MessageSizeDist::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            MessageSizeDist::Bimodal {
                small,
                large,
                p_large,
            } => *small as f64 * (1.0 - p_large) + *large as f64 * p_large,
            MessageSizeDist::Empirical(cdf) => cdf.mean(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_six_kib() {
        let d = MessageSizeDist::Fixed { bytes: 6 * 1024 };
        let mut rng = RngStream::new(1, 9);
        for _ in 0..10 {
            assert_eq!(d.sample(&mut rng), 6144);
        }
    }

    #[test]
    fn step_inversion() {
        let cdf = EmpiricalCdf::new(vec![(100, 0.5), (10_000, 1.0)]).unwrap();
        assert_eq!(cdf.inverse(0.25), 100);
        assert_eq!(cdf.inverse(0.5), 100);
        assert_eq!(cdf.inverse(0.5001), 10_000);
        assert_eq!(cdf.inverse(1.0), 10_000);
        assert_eq!(cdf.mean(), 5050.0);
    }

    #[test]
    fn lognormal_sample_mean() {
        let d = MessageSizeDist::lognormal_with_mean(20_000.0, 1.0);
        let mut rng = RngStream::new(3, 9);
        let n = 1_000_000;
        let sum: u64 = (0..n).map(|_| d.sample(&mut rng)).sum();
        let mean = sum as f64 / n as f64;
        let analytic = match d {
            MessageSizeDist::LogNormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            _ => unreachable!(),
        };
        assert!((mean / analytic - 1.0).abs() < 0.02, "{mean} vs {analytic}");
    }

    #[test]
    fn validation() {
        assert!(MessageSizeDist::Fixed { bytes: 0 }.validate().is_err());
        assert!(MessageSizeDist::Uniform { min: 5, max: 4 }
            .validate()
            .is_err());
        assert!(EmpiricalCdf::new(vec![(100, 0.5), (50, 1.0)]).is_err());
        let e = EmpiricalCdf::new(vec![(100, 0.5), (200, 0.9)]).unwrap_err();
        assert!(e.to_string().contains("CDF does not reach 1.0"));
    }
}
