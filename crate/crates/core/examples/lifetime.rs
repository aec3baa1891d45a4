//! Closed-form battery lifetime for a duty-cycled End Device, checked against a
//! simulated run to exhaustion.

use pathosim::engine::SimTime;
use pathosim::model::{NodeId, NodeSpec, Position, RadioConfig, ScenarioConfig};
use pathosim::power::{average_current, estimate_lifetime, BatteryState, ConsumptionProfile, PowerState};
use pathosim::sensors::{SensorKind, SensorModel, Signal};
use pathosim::world::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let profile = ConsumptionProfile::default();
    let capacity = BatteryState::DEFAULT_CAPACITY_MAH;
    let period = 1800.0;

    for active in [1.0, 5.0, 30.0] {
        let avg = average_current(&profile, period, active, PowerState::Transmitting)?;
        println!(
            "{active:>4} s transmitting per {period} s: {avg:.3} mA -> {:.2} h",
            estimate_lifetime(capacity, avg)?
        );
    }
    println!(
        "pure sleep bound: {:.2} h",
        estimate_lifetime(capacity, profile.sleeping_ma)?
    );

    let radio = RadioConfig::with_sensitivity(-40.0);
    let probe = SensorModel::new(SensorKind::TemperatureCatheter, Signal::Constant { level: 37.0 });
    let mut cfg = ScenarioConfig::with_nodes(vec![
        NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
        NodeSpec::end_device(NodeId(1), Position::new(2.0, 0.0, 0), radio, period, vec![probe]),
    ]);
    cfg.tx_airtime_override_s = Some(1.0);
    let mut sim = Simulation::new(cfg)?;
    sim.run_until(SimTime::from_secs(60 * 3600));
    let ledger = sim.ledger(NodeId(1)).expect("End Device has a ledger");
    match ledger.died_at {
        Some(t) => println!(
            "simulated: battery exhausted at {:.2} h, average {:.3} mA",
            t.as_secs_f64() / 3600.0,
            ledger.average_current_ma()
        ),
        None => println!("simulated: still alive after 60 h"),
    }
    Ok(())
}
