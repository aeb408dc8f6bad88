//! Injects a handful of messages into a 3-host rack with constant delays and
//! prints every grant, GRT arrival and burst hand-off.

use pl2sim::config::NetConfig;
use pl2sim::host::RecencyWindow;
use pl2sim::sim::DelayModel;
use pl2sim::workload::{MessageSizeDist, Pattern, Protocol, Scenario, Traffic};
use pl2sim::{SimTime, Simulation, TraceEvent};

fn main() -> pl2sim::Result<()> {
    let mut net = NetConfig::default();
    net.hosts = 3;
    net.clock_ppm = 0;
    net.ingress_jitter = SimTime::ZERO;
    net.delays = DelayModel::constant(
        SimTime::from_nanos(1060),
        SimTime::from_nanos(347),
        SimTime::from_nanos(60),
    );
    net.sched.recency_window = RecencyWindow::Fixed(SimTime::from_micros(5));

    let scenario = Scenario {
        name: "trace".into(),
        pattern: Pattern::Incast { senders: 2 },
        protocol: Protocol::Pl2,
        load_bps: 0.0,
        traffic: Traffic::Scripted,
        size: MessageSizeDist::Fixed { bytes: 6000 },
        flows_per_host: 1,
        duration: SimTime::from_micros(10),
    };
    let mut sim = Simulation::new(&net, &scenario, 1)?.with_trace();
    // flow 0 is host 0 -> host 2, flow 1 is host 1 -> host 2
    sim.inject(SimTime::ZERO, 0, 12_000);
    sim.inject(SimTime::from_nanos(300), 1, 6000);
    sim.inject(SimTime::from_micros(3), 0, 6000);

    let (report, trace) = sim.run()?;
    for e in trace.unwrap_or_default() {
        match e {
            TraceEvent::Grant {
                at,
                burst,
                src,
                send_timeslot,
                recv_timeslot,
                ..
            } => println!(
                "{:>6} ns  grant {burst} from {src}: send {send_timeslot}, recv {recv_timeslot}",
                at.as_nanos()
            ),
            TraceEvent::GrtArrival {
                at,
                burst,
                chosen,
                wait,
            } => {
                println!(
                    "{:>6} ns  GRT   {burst}: chosen {chosen}, wait {wait:?}",
                    at.as_nanos()
                )
            }
            TraceEvent::BurstTx {
                at,
                burst,
                unsolicited,
            } => {
                let how = if unsolicited { " (unsolicited)" } else { "" };
                println!("{:>6} ns  send  {burst}{how}", at.as_nanos())
            }
            TraceEvent::Deliver { .. } => {}
        }
    }
    println!(
        "{} of {} messages complete",
        report.messages_completed, report.messages_generated
    );
    Ok(())
}
