use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::sim::{RngStream, SimTime};

/// When messages appear at a sender. All open-loop kinds depend only on the
/// seed and their parameters, never on what the network does.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    Poisson {
        mean_interarrival_ns: f64,
    },
    Deterministic {
        interval_ns: f64,
    },
    /// Poisson arrivals during exponentially distributed ON periods,
    /// silence during OFF periods.
    OnOff {
        on_interarrival_ns: f64,
        mean_on_ns: f64,
        mean_off_ns: f64,
    },
    /// A new message whenever the previous one has been handed to the
    /// transport. Not open-loop.
    Backlogged,
}

impl ArrivalProcess {
    /// Open-loop process delivering `load_bps` of messages averaging
    /// `mean_bytes`.
    pub fn poisson_for_load(load_bps: f64, mean_bytes: f64) -> Self {
        ArrivalProcess::Poisson {
            mean_interarrival_ns: mean_bytes * 8.0 * 1e9 / load_bps,
        }
    }

    /// ON/OFF process with long-run average `load_bps` whose ON periods run
    /// at `peak_bps`.
    pub fn on_off_for_load(load_bps: f64, peak_bps: f64, mean_on_ns: f64, mean_bytes: f64) -> Self {
        let duty = (load_bps / peak_bps).min(1.0);
        ArrivalProcess::OnOff {
            on_interarrival_ns: mean_bytes * 8.0 * 1e9 / peak_bps,
            mean_on_ns,
            mean_off_ns: mean_on_ns * (1.0 - duty) / duty,
        }
    }

    pub fn is_open_loop(&self) -> bool {
        !matches!(self, ArrivalProcess::Backlogged)
    }

    /// Long-run mean time between arrivals, if open-loop.
    pub fn mean_interarrival_ns(&self) -> Option<f64> {
        match *self {
            ArrivalProcess::Poisson {
                mean_interarrival_ns,
            } => Some(mean_interarrival_ns),
            ArrivalProcess::Deterministic { interval_ns } => Some(interval_ns),
            ArrivalProcess::OnOff {
                on_interarrival_ns,
                mean_on_ns,
                mean_off_ns,
            } => Some(on_interarrival_ns * (mean_on_ns + mean_off_ns) / mean_on_ns),
            ArrivalProcess::Backlogged => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            ArrivalProcess::Poisson {
                mean_interarrival_ns,
            } => pos(mean_interarrival_ns),
            ArrivalProcess::Deterministic { interval_ns } => pos(interval_ns),
            ArrivalProcess::OnOff {
                on_interarrival_ns,
                mean_on_ns,
                mean_off_ns,
            } => {
                pos(on_interarrival_ns)
                    && pos(mean_on_ns)
                    && mean_off_ns.is_finite()
                    && mean_off_ns >= 0.0
            }
            ArrivalProcess::Backlogged => true,
        }
    }
}

/// Lazily produces the arrival times of one open-loop process.
#[derive(Clone, Debug)]
pub struct ArrivalGen {
    process: ArrivalProcess,
    rng: RngStream,
    /// Fractional ns of the last arrival.
    clock: f64,
    on_until: f64,
}

impl ArrivalGen {
    pub fn new(process: ArrivalProcess, rng: RngStream, start: SimTime) -> Self {
        let mut g = ArrivalGen {
            process,
            rng,
            clock: start.as_nanos() as f64,
            on_until: f64::INFINITY,
        };
        if let ArrivalProcess::OnOff {
            mean_on_ns,
            mean_off_ns,
            ..
        } = process
        {
            // start in a random phase of the ON/OFF cycle
            let on_frac = mean_on_ns / (mean_on_ns + mean_off_ns);
            if g.rng.unit() < on_frac {
                g.on_until = g.clock + g.exp() * mean_on_ns;
            } else {
                g.clock += g.exp() * mean_off_ns;
                g.on_until = g.clock + g.exp() * mean_on_ns;
            }
        }
        g
    }

    fn exp(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    /// Time of the next arrival, `None` for backlogged sources.
    pub fn next_arrival(&mut self) -> Option<SimTime> {
        match self.process {
            ArrivalProcess::Poisson {
                mean_interarrival_ns,
            } => {
                self.clock += self.exp() * mean_interarrival_ns;
            }
            ArrivalProcess::Deterministic { interval_ns } => {
                self.clock += interval_ns;
            }
            ArrivalProcess::OnOff {
                on_interarrival_ns,
                mean_on_ns,
                mean_off_ns,
            } => {
                let mut t = self.clock + self.exp() * on_interarrival_ns;
                while t > self.on_until {
                    let on_start = self.on_until + self.exp() * mean_off_ns;
                    self.on_until = on_start + self.exp() * mean_on_ns;
                    // memoryless: restart the interarrival clock at ON start
                    t = on_start + self.exp() * on_interarrival_ns;
                }
                self.clock = t;
            }
            ArrivalProcess::Backlogged => return None,
        }
        Some(SimTime::from_nanos(self.clock.round() as u64))
    }
}
