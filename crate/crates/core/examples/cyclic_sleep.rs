//! Poll-grid quantization of requested sampling periods, and the wake times an
//! End Device actually sees in a simulated hour.

use pathosim::engine::SimTime;
use pathosim::model::{NodeId, NodeSpec, Position, RadioConfig, ScenarioConfig};
use pathosim::power::{cyclic_sleep_n, wake_timeline, CyclicSleepConfig};
use pathosim::sensors::{SensorKind, SensorModel, Signal};
use pathosim::world::Simulation;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let t_poll = RadioConfig::DEFAULT_POLL_PERIOD_S;
    println!("poll period {t_poll} s");
    println!(
        "{:>10} {:>4} {:>10} {:>8}",
        "requested", "n", "effective", "error"
    );
    for requested in [28.0, 100.0, 120.0, 600.0, 900.0, 1800.0, 3600.0] {
        let (n, effective) = cyclic_sleep_n(requested, t_poll)?;
        let err = (effective - requested) / requested * 100.0;
        println!("{requested:>10} {n:>4} {effective:>10} {err:>+7.2}%");
    }

    let cfg = CyclicSleepConfig::new(120.0, t_poll)?;
    let tl = wake_timeline(&cfg, 3600.0);
    println!(
        "\n120 s request over 1 h: {} poll wakes, {} external wakes",
        tl.polls.len(),
        tl.externals.len()
    );

    let radio = RadioConfig::with_sensitivity(-40.0);
    let probe = SensorModel::new(SensorKind::TemperatureCatheter, Signal::Constant { level: 37.0 });
    let scenario = ScenarioConfig::with_nodes(vec![
        NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
        NodeSpec::end_device(NodeId(1), Position::new(2.0, 0.0, 0), radio, 120.0, vec![probe]),
    ]);
    let mut sim = Simulation::new(scenario)?.with_trace(true);
    sim.run_until(SimTime::from_secs(3600));
    let simulated: Vec<f64> = sim
        .trace()
        .iter()
        .filter(|l| l.kind == "external_wake")
        .map(|l| SimTime::from_ticks(l.ticks).as_secs_f64())
        .collect();
    println!("simulated external wakes (s): {simulated:?}");
    assert_eq!(simulated.len(), tl.externals.len());
    Ok(())
}
