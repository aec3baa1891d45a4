//! One full collection round against a strain gauge, printed as an event trace:
//! wake, request, heating, samples, sleep.

use pathosim::engine::SimTime;
use pathosim::model::{NodeId, NodeSpec, Position, RadioConfig, ScenarioConfig};
use pathosim::sensors::{SensorKind, SensorModel, Signal};
use pathosim::world::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let radio = RadioConfig::with_sensitivity(-40.0);
    let gauge = SensorModel::new(SensorKind::StrainGauge, Signal::Constant { level: 120.0 });
    let disp = SensorModel::new(SensorKind::Displacement, Signal::Constant { level: 0.8 });
    let cfg = ScenarioConfig::with_nodes(vec![
        NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
        NodeSpec::end_device(
            NodeId(1),
            Position::new(2.0, 0.0, 0),
            radio,
            900.0,
            vec![gauge, disp],
        ),
    ]);
    let mut sim = Simulation::new(cfg)?.with_trace(true);
    sim.run_until(SimTime::from_secs(1200));

    for line in sim
        .trace()
        .iter()
        .filter(|l| l.kind != "poll_wake" && l.kind != "poll_done")
    {
        println!("{line}");
    }
    println!();
    for r in sim.samples() {
        println!(
            "{} {} = {} (sampled {:.3} s, received {:.3} s)",
            r.node,
            r.sensor,
            r.value,
            r.sampled_at.as_secs_f64(),
            r.received_at.as_secs_f64()
        );
    }
    Ok(())
}
