#![allow(dead_code)]

pub mod props;
pub mod reference;

use pl2sim::config::NetConfig;
use pl2sim::host::RecencyWindow;
use pl2sim::sim::DelayModel;
use pl2sim::workload::{MessageSizeDist, Pattern, Protocol, Scenario, Traffic};
use pl2sim::{SimTime, Simulation, TraceEvent};
use reference::{Obs, RefMessage, RefParams};

/// 8 Gbps makes one byte one nanosecond, so every frame time is integral.
pub const RATE: u64 = 8_000_000_000;

pub fn constant_params() -> RefParams {
    RefParams {
        hosts: 3,
        rate_bps: RATE,
        mtu: 1500,
        propagation: 5,
        switching: 346,
        nic_fixed: 60,
        exchange: 1000,
        k: 4,
        t: 15,
        big_t: 60,
        recency: 20_000,
    }
}

pub fn net_for(p: &RefParams) -> NetConfig {
    let mut n = NetConfig::default();
    n.hosts = p.hosts as u32;
    n.link_rate_bps = p.rate_bps;
    n.mtu = p.mtu as u32;
    n.propagation = SimTime::from_nanos(p.propagation);
    n.clock_ppm = 0;
    n.delays = DelayModel::constant(
        SimTime::from_nanos(p.exchange),
        SimTime::from_nanos(p.switching),
        SimTime::from_nanos(p.nic_fixed),
    );
    n.nic_fetch_bps = 0;
    n.ingress_jitter = SimTime::ZERO;
    n.sched.k = p.k as u32;
    n.sched.t = p.t;
    n.sched.recency_window = RecencyWindow::Fixed(SimTime::from_nanos(p.recency));
    n.switch.max_demand = p.k as u32;
    n.switch.unsolicited_threshold = p.big_t;
    n.audit = true;
    n
}

/// Incast of `senders` hosts into the last host, one flow each; flow `i`
/// belongs to host `i`.
pub fn scripted_incast(senders: u16, duration: SimTime) -> Scenario {
    Scenario {
        name: "scripted".into(),
        pattern: Pattern::Incast { senders },
        protocol: Protocol::Pl2,
        load_bps: 0.0,
        traffic: Traffic::Scripted,
        size: MessageSizeDist::Fixed { bytes: 6000 },
        flows_per_host: 1,
        duration,
    }
}

/// Runs `messages` through the simulator and returns its trace in the
/// reference's terms, ordered by time and then by content.
pub fn simulate_trace(p: &RefParams, messages: &[RefMessage]) -> Vec<Obs> {
    let senders = (p.hosts - 1) as u16;
    let end = messages.iter().map(|m| m.at).max().unwrap_or(0) + 1;
    let mut sim = Simulation::new(
        &net_for(p),
        &scripted_incast(senders, SimTime::from_nanos(end)),
        1,
    )
    .unwrap()
    .with_trace();
    for m in messages {
        assert_eq!(m.dst, p.hosts - 1);
        let flow = sim
            .plan()
            .flows
            .iter()
            .position(|f| f.src.0 as usize == m.src)
            .unwrap();
        sim.inject(SimTime::from_nanos(m.at), flow, m.bytes);
    }
    let (_, trace) = sim.run().unwrap();
    let mut obs: Vec<Obs> = trace
        .unwrap()
        .into_iter()
        .filter_map(|e| match e {
            TraceEvent::Grant {
                at,
                burst,
                send_timeslot,
                recv_timeslot,
                ..
            } => Some(Obs::Grant {
                at: at.as_nanos(),
                burst: burst.0,
                send: send_timeslot,
                recv: recv_timeslot,
            }),
            TraceEvent::GrtArrival {
                at,
                burst,
                chosen,
                wait,
            } => Some(Obs::GrtArrival {
                at: at.as_nanos(),
                burst: burst.0,
                chosen,
                wait: wait.map(|w| w.as_nanos()),
            }),
            TraceEvent::BurstTx {
                at,
                burst,
                unsolicited,
            } => Some(Obs::BurstTx {
                at: at.as_nanos(),
                burst: burst.0,
                unsolicited,
            }),
            TraceEvent::Deliver { .. } => None,
        })
        .collect();
    sort_obs(&mut obs);
    obs
}

pub fn sort_obs(obs: &mut [Obs]) {
    obs.sort_by_key(|o| match *o {
        Obs::Grant { at, burst, .. } => (at, 0, burst),
        Obs::GrtArrival { at, burst, .. } => (at, 1, burst),
        Obs::BurstTx { at, burst, .. } => (at, 2, burst),
    });
}

pub fn reference_trace(p: &RefParams, messages: &[RefMessage]) -> Vec<Obs> {
    let mut obs = reference::evaluate(p, messages);
    sort_obs(&mut obs);
    obs
}

/// 2-way incast, ten bursts per sender: single-burst and multi-burst
/// messages, short and full bursts, close enough together that later bursts
/// go out unsolicited and the output reservation climbs past `t`.
pub fn twenty_bursts() -> Vec<RefMessage> {
    let m = |at, src, bytes| RefMessage {
        at,
        src,
        dst: 2,
        bytes,
    };
    vec![
        m(0, 0, 6000),
        m(1_003, 1, 6000),
        m(1_507, 1, 12_000),
        m(2_000, 0, 6000),
        m(2_500, 0, 9000),
        m(3_011, 1, 6000),
        m(29_999, 1, 9000),
        m(30_000, 0, 6000),
        m(31_000, 0, 3000),
        m(32_017, 1, 6000),
        m(33_000, 0, 12_000),
        m(34_001, 1, 6000),
        m(69_013, 1, 4500),
        m(70_000, 0, 1500),
        m(71_000, 0, 6000),
        m(72_029, 1, 6000),
    ]
}
