//! The sender side of one RSV-GRT exchange, driven by hand: decide whether
//! the burst may go out unsolicited, then turn the GRT into a waiting time.

use pl2sim::host::{
    on_grt, schedule_burst, GrtAction, HostFlowState, SchedulerParams, WaitContext,
};
use pl2sim::ids::BurstId;
use pl2sim::switch::GrtInfo;
use pl2sim::SimTime;

fn main() -> pl2sim::Result<()> {
    let params = SchedulerParams::default();
    let mut flow = HostFlowState::new();
    let ctx = WaitContext {
        nic_pending_bytes: 3000,
        timeslot: SimTime::from_nanos(120),
        line_rate_bps: 100_000_000_000,
    };

    // No GRT seen yet, so the first burst waits for its reservation.
    let plan = schedule_burst(&mut flow, &params, 0, BurstId(0), SimTime::ZERO)?;
    println!("burst 0: {plan:?}");
    let grt = GrtInfo {
        send_timeslot: 2,
        recv_timeslot: 30,
        burst_id: BurstId(0),
    };
    let action = on_grt(&mut flow, &params, &grt, SimTime::from_nanos(1060), ctx)?;
    // 30 slots * 120 ns - 1060 ns exchange - 3000 B still queued at the NIC
    println!("burst 0: {action:?}");

    // The last chosen slot (30) is above t, so this burst waits as well.
    // Its GRT finds the port nearly empty.
    let plan = schedule_burst(&mut flow, &params, 0, BurstId(1), SimTime::from_nanos(1500))?;
    println!("burst 1: {plan:?}");
    let grt = GrtInfo {
        send_timeslot: 0,
        recv_timeslot: 3,
        burst_id: BurstId(1),
    };
    let action = on_grt(&mut flow, &params, &grt, SimTime::from_nanos(2600), ctx)?;
    println!("burst 1: {action:?}");

    // The next burst goes out unsolicited, but the port has filled up
    // meanwhile: the copy may have been dropped, so it is sent again.
    let plan = schedule_burst(&mut flow, &params, 0, BurstId(2), SimTime::from_nanos(2700))?;
    println!("burst 2: {plan:?}");
    let grt = GrtInfo {
        send_timeslot: 0,
        recv_timeslot: 70,
        burst_id: BurstId(2),
    };
    match on_grt(&mut flow, &params, &grt, SimTime::from_nanos(3800), ctx)? {
        GrtAction::Resend { chosen, wait } => {
            println!("burst 2: resend at slot {chosen} after {wait}")
        }
        other => println!("burst 2: {other:?}"),
    }
    Ok(())
}
