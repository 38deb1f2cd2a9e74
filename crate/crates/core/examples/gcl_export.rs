// Turn a solved schedule into per-port gate control lists and print them
// as CSV, along with the best-effort gaps left on the bridge link.

use tsnsched::gcl::export_gcl;
use tsnsched::model::{build_topology, two_bridge_line_spec, two_bridge_static_flows};
use tsnsched::scheduler::{solve_static, SchedulerConfig};

pub fn run_example() -> anyhow::Result<()> {
    let topo = build_topology(&two_bridge_line_spec())?;
    let flows = two_bridge_static_flows();
    let cfg = SchedulerConfig::default();
    let assign = solve_static(&flows, &topo, &cfg)?;
    let gcls = assign.to_gcls(&topo, cfg.omega)?;
    print!("{}", export_gcl(gcls.ports.values()));
    println!("beta {} of omega {}", gcls.beta(), cfg.omega);
    let link = gcls.port("BR1->BR2").expect("bridge link port");
    let gaps = link.be_gaps();
    let idle: i64 = gaps.iter().map(|(o, c)| c - o).sum();
    println!(
        "BR1->BR2: {} entries, {} BE gaps, {:.2}% idle",
        link.beta(),
        gaps.len(),
        100.0 * idle as f64 / assign.hyperperiod as f64
    );
    anyhow::ensure!(gcls.beta() <= cfg.omega);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
