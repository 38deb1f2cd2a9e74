// Offline rescheduling when the gate budget runs out: re-solve the whole
// flow set from scratch, shedding the lowest-priority flows until a
// feasible schedule exists.

use std::collections::HashMap;

use tsnsched::env::fallback_reschedule;
use tsnsched::model::{
    build_topology, hyperperiod, two_bridge_line_spec, two_bridge_static_flows, Flow, FlowKind,
    DEFAULT_LINK_RATE_BPS,
};
use tsnsched::scheduler::SchedulerConfig;

pub fn run_example() -> anyhow::Result<()> {
    let topo = build_topology(&two_bridge_line_spec())?;
    let mut flows = two_bridge_static_flows();
    // Two extra flows that each need most of the bridge link per period.
    for (i, pcp) in [(1, 5), (2, 4)] {
        flows.push(Flow::new(
            format!("bulk{i}"),
            FlowKind::TT,
            "TK1",
            "LR1",
            1500,
            250_000,
            250_000,
            pcp,
            DEFAULT_LINK_RATE_BPS,
        )?);
    }
    let cfg = SchedulerConfig {
        omega: 64,
        ..SchedulerConfig::default()
    };
    let hp = hyperperiod(&flows)?;
    let (assign, gcls, report) = fallback_reschedule(&flows, &HashMap::new(), &topo, &cfg, hp)?;
    println!(
        "kept {} flows, shed {:?}, beta {} (omega {}), {} violations",
        report.survivors, report.shed, report.beta, cfg.omega, report.violations
    );
    anyhow::ensure!(report.violations == 0 && gcls.beta() <= cfg.omega);
    anyhow::ensure!(assign.flows.len() == report.survivors);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
