//! Brute-force reference for small hand-built PL2 runs with constant
//! delays. It shares no code with the simulator: frames, queues, registers
//! and host state are plain vectors driven by a sorted event list, and every
//! step is written straight from the protocol rules.

use std::collections::{BTreeMap, VecDeque};

#[derive(Clone, Copy, Debug)]
pub struct RefParams {
    pub hosts: usize,
    pub rate_bps: u64,
    pub mtu: u64,
    pub propagation: u64,
    pub switching: u64,
    pub nic_fixed: u64,
    /// Constant RSV-GRT exchange delay.
    pub exchange: u64,
    pub k: u64,
    pub t: u32,
    pub big_t: u32,
    pub recency: u64,
}

/// One scripted message; each sending host has a single flow.
#[derive(Clone, Copy, Debug)]
pub struct RefMessage {
    pub at: u64,
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Obs {
    Grant {
        at: u64,
        burst: u64,
        send: u32,
        recv: u32,
    },
    GrtArrival {
        at: u64,
        burst: u64,
        chosen: u32,
        wait: Option<u64>,
    },
    BurstTx {
        at: u64,
        burst: u64,
        unsolicited: bool,
    },
}

#[derive(Clone, Copy, Debug)]
enum Frame {
    Rsv {
        src: usize,
        dst: usize,
        burst: usize,
        demand: u32,
    },
    Grt {
        to: usize,
        burst: usize,
        send: u32,
        recv: u32,
    },
    Data {
        src: usize,
        dst: usize,
        burst: usize,
        bytes: u64,
        solicited: bool,
    },
}

impl Frame {
    fn bytes(&self) -> u64 {
        match self {
            Frame::Data { bytes, .. } => *bytes,
            _ => 64,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    Arrive(usize),
    RsvOut(usize, bool),
    BurstTx(usize),
    NicDone(usize),
    SwitchIn(Frame),
    PortDone(usize),
    HostIn(Frame),
}

#[derive(Default)]
struct Tx {
    control: VecDeque<Frame>,
    data: VecDeque<Frame>,
    busy: Option<Frame>,
    data_bytes: u64,
}

struct BurstInfo {
    src: usize,
    dst: usize,
    sizes: Vec<u64>,
    send_extra: u64,
    grt_extra: u64,
    went_unsolicited: bool,
}

#[derive(Default)]
struct FlowState {
    queue: VecDeque<usize>,
    blocked: bool,
    /// (burst, issued at, unsolicited)
    outstanding: Option<(usize, u64, bool)>,
    last_chosen: Option<u32>,
    last_response: u64,
    estimate: Option<u64>,
}

pub fn evaluate(p: &RefParams, messages: &[RefMessage]) -> Vec<Obs> {
    let ser = |bytes: u64| (bytes * 8 * 1_000_000_000).div_ceil(p.rate_bps);
    let timeslot = ser(p.mtu);
    let base = 2 * ser(64) + 2 * p.propagation + p.switching + p.nic_fixed;
    let extra = p.exchange.saturating_sub(base);

    let mut events: BTreeMap<(u64, u64), Ev> = BTreeMap::new();
    let mut seq = 0u64;
    let mut push = |events: &mut BTreeMap<(u64, u64), Ev>, at: u64, ev: Ev| {
        events.insert((at, seq), ev);
        seq += 1;
    };
    for (i, m) in messages.iter().enumerate() {
        push(&mut events, m.at, Ev::Arrive(i));
    }

    let mut nics: Vec<Tx> = (0..p.hosts).map(|_| Tx::default()).collect();
    let mut ports: Vec<Tx> = (0..p.hosts).map(|_| Tx::default()).collect();
    let mut input = vec![0u32; p.hosts];
    let mut output = vec![0u32; p.hosts];
    let mut flows: Vec<FlowState> = (0..p.hosts).map(|_| FlowState::default()).collect();
    let mut bursts: Vec<BurstInfo> = Vec::new();
    let mut obs = Vec::new();

    while let Some((&(now, s), &ev)) = events.iter().next() {
        events.remove(&(now, s));
        // Work queued by this event: new events are pushed in the order a
        // straightforward implementation would produce them.
        let mut out: Vec<(u64, Ev)> = Vec::new();
        let mut kick_nic = Vec::new();
        let mut kick_port = Vec::new();
        let mut issue = Vec::new();
        match ev {
            Ev::Arrive(i) => {
                let m = messages[i];
                let mut left = m.bytes;
                let mut sizes = Vec::new();
                while left > 0 {
                    let b = left.min(p.mtu);
                    sizes.push(b);
                    left -= b;
                }
                for chunk in sizes.chunks(p.k as usize) {
                    bursts.push(BurstInfo {
                        src: m.src,
                        dst: m.dst,
                        sizes: chunk.to_vec(),
                        send_extra: 0,
                        grt_extra: 0,
                        went_unsolicited: false,
                    });
                    flows[m.src].queue.push_back(bursts.len() - 1);
                }
                issue.push(m.src);
                kick_nic.push(m.src);
            }
            Ev::RsvOut(b, unsolicited) => {
                let (src, dst) = (bursts[b].src, bursts[b].dst);
                nics[src].control.push_back(Frame::Rsv {
                    src,
                    dst,
                    burst: b,
                    demand: bursts[b].sizes.len() as u32,
                });
                if unsolicited {
                    bursts[b].went_unsolicited = true;
                    hand_to_nic(&mut nics[src], &bursts[b], b, false);
                    obs.push(Obs::BurstTx {
                        at: now,
                        burst: b as u64,
                        unsolicited: true,
                    });
                }
                kick_nic.push(src);
            }
            Ev::BurstTx(b) => {
                let src = bursts[b].src;
                hand_to_nic(&mut nics[src], &bursts[b], b, true);
                obs.push(Obs::BurstTx {
                    at: now,
                    burst: b as u64,
                    unsolicited: false,
                });
                kick_nic.push(src);
                if flows[src].outstanding.is_none() {
                    flows[src].blocked = false;
                }
                issue.push(src);
            }
            Ev::NicDone(h) => {
                let f = nics[h].busy.take().expect("NIC busy");
                if let Frame::Data { bytes, .. } = f {
                    nics[h].data_bytes -= bytes;
                }
                out.push((now + p.propagation + p.switching, Ev::SwitchIn(f)));
                kick_nic.push(h);
            }
            Ev::SwitchIn(f) => match f {
                Frame::Rsv {
                    src,
                    dst,
                    burst,
                    demand,
                } => {
                    let send = input[src];
                    let recv = output[dst];
                    input[src] += demand;
                    output[dst] += demand;
                    obs.push(Obs::Grant {
                        at: now,
                        burst: burst as u64,
                        send,
                        recv,
                    });
                    ports[src].control.push_back(Frame::Grt {
                        to: src,
                        burst,
                        send,
                        recv,
                    });
                    kick_port.push(src);
                }
                Frame::Data { dst, bytes, .. } => {
                    ports[dst].data.push_back(f);
                    ports[dst].data_bytes += bytes;
                    kick_port.push(dst);
                }
                Frame::Grt { .. } => unreachable!("GRT arriving from a host"),
            },
            Ev::PortDone(port) => {
                let f = ports[port].busy.take().expect("port busy");
                let mut at = now + p.propagation + p.nic_fixed;
                match f {
                    Frame::Data { bytes, .. } => ports[port].data_bytes -= bytes,
                    Frame::Grt { burst, .. } => at += bursts[burst].grt_extra,
                    Frame::Rsv { .. } => {}
                }
                out.push((at, Ev::HostIn(f)));
                kick_port.push(port);
            }
            Ev::HostIn(f) => {
                if let Frame::Grt {
                    to,
                    burst,
                    send,
                    recv,
                } = f
                {
                    let fl = &mut flows[to];
                    let (ob, issued, unsolicited) = fl.outstanding.take().expect("GRT expected");
                    assert_eq!(ob, burst);
                    let sample = now - issued;
                    fl.estimate = Some(match fl.estimate {
                        None => sample,
                        Some(e) => {
                            let step = (e / 16).max(1);
                            if sample > e {
                                e + step.min(sample - e)
                            } else {
                                e - step.min(e - sample)
                            }
                        }
                    });
                    let est = fl.estimate.unwrap();
                    let chosen = send.max(recv);
                    let pending = nics[to].data_bytes;
                    let w = (chosen as i128 * timeslot as i128
                        - est as i128
                        - (pending as i128 * 8 * 1_000_000_000) / p.rate_bps as i128)
                        .max(0) as u64;
                    let was_low = fl.last_chosen.is_some_and(|c| c < p.t);
                    let send_now = !unsolicited || (chosen > p.t && was_low);
                    fl.last_chosen = Some(chosen);
                    fl.last_response = now;
                    obs.push(Obs::GrtArrival {
                        at: now,
                        burst: burst as u64,
                        chosen,
                        wait: send_now.then_some(w),
                    });
                    if send_now {
                        let at = now + ser(pending) + w + bursts[burst].send_extra;
                        out.push((at, Ev::BurstTx(burst)));
                    } else {
                        fl.blocked = false;
                        issue.push(to);
                    }
                }
            }
        }

        for h in issue {
            let fl = &mut flows[h];
            if fl.blocked || fl.outstanding.is_some() {
                continue;
            }
            let Some(b) = fl.queue.pop_front() else {
                continue;
            };
            let low = fl.last_chosen.is_some_and(|c| c < p.t);
            let unsolicited = low && now - fl.last_response <= p.recency;
            fl.outstanding = Some((b, now, unsolicited));
            fl.blocked = true;
            bursts[b].send_extra = extra / 2;
            bursts[b].grt_extra = extra - extra / 2;
            out.push((now + extra / 2, Ev::RsvOut(b, unsolicited)));
        }
        for h in kick_nic {
            let nic = &mut nics[h];
            if nic.busy.is_some() {
                continue;
            }
            let next = nic.control.pop_front().or_else(|| nic.data.pop_front());
            if let Some(f) = next {
                nic.busy = Some(f);
                out.push((now + ser(f.bytes()), Ev::NicDone(h)));
            }
        }
        for port in kick_port {
            let tx = &mut ports[port];
            if tx.busy.is_some() {
                continue;
            }
            let next = if let Some(f) = tx.control.pop_front() {
                Some(f)
            } else {
                // Registers settle as a data frame starts on the output
                // link; an unsolicited frame over the threshold is discarded.
                let mut chosen = None;
                while let Some(f) = tx.data.pop_front() {
                    let Frame::Data {
                        src,
                        dst,
                        burst,
                        bytes,
                        solicited,
                    } = f
                    else {
                        unreachable!()
                    };
                    if solicited && bursts[burst].went_unsolicited {
                        chosen = Some(f);
                        break;
                    }
                    let old = output[dst];
                    output[dst] = old.saturating_sub(1);
                    input[src] = input[src].saturating_sub(1);
                    if solicited || old <= p.big_t {
                        chosen = Some(f);
                        break;
                    }
                    tx.data_bytes -= bytes;
                }
                chosen
            };
            if let Some(f) = next {
                tx.busy = Some(f);
                out.push((now + ser(f.bytes()), Ev::PortDone(port)));
            }
        }
        for (at, ev) in out {
            push(&mut events, at, ev);
        }
    }
    obs
}

fn hand_to_nic(nic: &mut Tx, b: &BurstInfo, id: usize, solicited: bool) {
    for &bytes in &b.sizes {
        nic.data.push_back(Frame::Data {
            src: b.src,
            dst: b.dst,
            burst: id,
            bytes,
            solicited,
        });
        nic.data_bytes += bytes;
    }
}
