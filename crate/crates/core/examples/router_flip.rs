//! Reachability of the far End Device with the Router enabled and disabled.

use std::path::Path;

use pathosim::engine::SimTime;
use pathosim::model::{load_scenario, NodeId};
use pathosim::report::RunReport;
use pathosim::world::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/building.json");
    let base = load_scenario(&path)?;
    let far = NodeId(3);

    for enabled in [true, false] {
        let cfg = base.with_node_enabled(NodeId(1), enabled);
        let mut sim = Simulation::new(cfg)?;
        let route = sim.parent_table().route(far, NodeId::COORDINATOR);
        sim.run_until(SimTime::from_secs(86_400));
        let report = RunReport::from_simulation(&sim);
        let node = report.node(far).expect("node 3 is in the scenario");
        println!(
            "router {}: route {:?}, reachable {}, {} samples in 24 h",
            if enabled { "on " } else { "off" },
            route,
            node.reachable,
            node.samples
        );
    }
    Ok(())
}
