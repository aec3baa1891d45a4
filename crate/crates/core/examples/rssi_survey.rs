//! Shadowed RSSI surveys: the grand mean over repeated message batches stays
//! close to the deterministic received power.

use std::path::Path;

use pathosim::engine::RngStream;
use pathosim::model::{load_scenario, NodeId};
use pathosim::propagation::{link_budget, measure_rssi};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/building.json");
    let cfg = load_scenario(&path)?;
    let budget = link_budget(&cfg, NodeId(0), NodeId(2))?;
    println!("deterministic: {:.2} dBm", budget.received_power);

    let root = RngStream::new(cfg.seed);
    for sigma in [0.0_f64, 2.0, 4.0, 8.0] {
        let mut rng = root.fork(sigma.to_bits());
        let means: Vec<f64> = (0..5)
            .map(|_| measure_rssi(&budget, sigma, 20, 5, &mut rng))
            .collect();
        let worst = means
            .iter()
            .map(|m| (m - budget.received_power).abs())
            .fold(0.0, f64::max);
        println!("sigma {sigma:>3} dB: surveys {means:.2?} (worst offset {worst:.2} dB)");
    }
    Ok(())
}
