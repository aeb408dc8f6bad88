//! The switch dataplane on its own: RSVs reserve timeslots on the input and
//! output register arrays, data packets give them back, and unsolicited
//! packets are refused while the output port is over T.

use pl2sim::ids::{BurstId, PortId};
use pl2sim::switch::{DataHeader, Pl2Dataplane, RsvPacket, SwitchConfig};

fn main() -> pl2sim::Result<()> {
    let mut sw = Pl2Dataplane::new(
        SwitchConfig {
            num_ports: 4,
            unsolicited_threshold: 6,
            ..SwitchConfig::default()
        },
        true,
    );
    for (i, src) in [0u16, 1, 2].into_iter().enumerate() {
        let grt = sw.handle_rsv(&RsvPacket {
            src: PortId(src),
            dst: PortId(3),
            demand: 4,
            burst_id: BurstId(i as u64),
        })?;
        println!(
            "RSV from {src}: send slot {}, recv slot {}",
            grt.send_timeslot, grt.recv_timeslot
        );
    }
    println!("output registers {:?}", sw.registers().output.values());

    let pkt = |src, solicited, burst| DataHeader {
        src: PortId(src),
        dst: PortId(3),
        solicited,
        resend: false,
        burst: Some(BurstId(burst)),
    };
    for _ in 0..4 {
        println!(
            "scheduled packet from 0: {:?}",
            sw.handle_data(&pkt(0, true, 0))
        );
    }
    for _ in 0..4 {
        println!(
            "unsolicited packet from 2: {:?}",
            sw.handle_data(&pkt(2, false, 2))
        );
    }
    println!("output registers {:?}", sw.registers().output.values());
    println!(
        "audit: {} checks, {} violations",
        sw.auditor().unwrap().checks(),
        sw.auditor().unwrap().violations().len()
    );
    Ok(())
}
