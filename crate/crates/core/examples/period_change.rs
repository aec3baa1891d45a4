//! Retargeting an End Device's sampling period mid-run with SET_PERIOD.

use pathosim::engine::SimTime;
use pathosim::model::{NodeId, NodeSpec, Position, RadioConfig, ScenarioConfig};
use pathosim::sensors::{SensorKind, SensorModel, Signal};
use pathosim::world::{Command, Simulation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let radio = RadioConfig::with_sensitivity(-40.0);
    let probe = SensorModel::new(SensorKind::TemperatureCatheter, Signal::Constant { level: 37.0 });
    let node = NodeId(1);
    let cfg = ScenarioConfig::with_nodes(vec![
        NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
        NodeSpec::end_device(node, Position::new(2.0, 0.0, 0), radio, 1800.0, vec![probe]),
    ]);
    let mut sim = Simulation::new(cfg)?.with_trace(true);

    sim.run_until(SimTime::from_secs(3600));
    println!("first hour at 1800 s: {} samples", sim.samples().len());

    sim.inject(Command::SetPeriod { node, seconds: 300 });
    sim.run_until(SimTime::from_secs(2 * 3600));
    let cyclic = sim.cyclic(node).expect("End Device has a wake schedule");
    println!(
        "period now {} s (n = {}, effective {} s)",
        cyclic.t_external_s,
        cyclic.n,
        cyclic.effective_period_s()
    );
    println!("after second hour: {} samples", sim.samples().len());

    for line in sim.trace().iter().filter(|l| l.detail.contains("SET_PERIOD")) {
        println!("{line}");
    }
    Ok(())
}
