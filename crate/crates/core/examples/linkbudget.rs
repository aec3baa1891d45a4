//! Itemised link budget between the Coordinator and the far End Device of the
//! bundled building scenario, in both directions.

use std::path::Path;

use pathosim::model::{load_scenario, NodeId};
use pathosim::propagation::{is_connected, link_budget};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/building.json");
    let cfg = load_scenario(&path)?;

    for (a, b) in [
        (NodeId(0), NodeId(3)),
        (NodeId(3), NodeId(0)),
        (NodeId(1), NodeId(3)),
    ] {
        let budget = link_budget(&cfg, a, b)?;
        let sensitivity = cfg.require_node(b)?.radio.sensitivity_dbm;
        println!("{a} -> {b}: {:.2} m", budget.distance);
        println!("  free space        {:>7.2} dB", budget.free_space_loss);
        for o in &budget.obstacle_losses {
            println!("  {:<17} {:>7.2} dB", o.kind, o.loss_db);
        }
        println!("  total             {:>7.2} dB", budget.total_attenuation);
        println!(
            "  received          {:>7.2} dBm (sensitivity {sensitivity} dBm, {})",
            budget.received_power,
            if is_connected(&budget, sensitivity) {
                "closes"
            } else {
                "open"
            }
        );
    }
    Ok(())
}
