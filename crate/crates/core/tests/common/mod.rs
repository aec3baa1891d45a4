//! Generators and property checks shared by the property suites and the
//! acceptance target.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pathosim::engine::SimTime;
use pathosim::model::{
    NodeId, NodeRole, NodeSpec, Obstacle, ObstacleKind, Position, RadioConfig, ScenarioConfig,
};
use pathosim::power::BatteryState;
use pathosim::propagation::{is_connected, link_budget};
use pathosim::protocol::{
    build_parent_table, decode_frame, encode_frame, ErrorCode, FrameError, MessageFrame, MessageKind,
    SamplePayload,
};
use pathosim::report::{write_samples_csv, RunReport};
use pathosim::sensors::{SensorKind, SensorModel, Signal};
use pathosim::world::{Command, Simulation};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

// ============================================================================
// Frames
// ============================================================================

pub fn arb_frame() -> impl Strategy<Value = MessageFrame> {
    let header = (any::<u16>(), any::<u16>(), any::<u16>());
    let body = prop_oneof![
        prop::sample::select(vec![
            MessageKind::Awake,
            MessageKind::HeatGaugeReq,
            MessageKind::SampleReq,
            MessageKind::SleepReq,
            MessageKind::Ack,
        ])
        .prop_map(|k| (k, vec![])),
        (
            prop::sample::select(SensorKind::ALL.to_vec()),
            any::<u64>(),
            any::<u64>()
        )
            .prop_map(|(sensor, bits, ticks)| {
                let f = MessageFrame::sample_resp(
                    NodeId(0),
                    NodeId(0),
                    0,
                    SamplePayload {
                        sensor,
                        value: f64::from_bits(bits),
                        sampled_at: SimTime::from_ticks(ticks),
                    },
                );
                (MessageKind::SampleResp, f.payload)
            }),
        any::<u32>().prop_map(|p| (MessageKind::SetPeriod, p.to_be_bytes().to_vec())),
        prop::sample::select(vec![ErrorCode::GaugeNotHeated, ErrorCode::IllegalState])
            .prop_map(|c| (MessageKind::Err, vec![c as u8])),
    ];
    (header, body).prop_map(|((src, dst, seq), (kind, payload))| MessageFrame {
        kind,
        src: NodeId(src),
        dst: NodeId(dst),
        seq,
        payload,
    })
}

/// Encode/decode is the identity, and flipping any single bit is caught.
pub fn check_codec(frame: &MessageFrame, bit_seed: usize) -> Result<(), TestCaseError> {
    let bytes = encode_frame(frame).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(bytes.len(), 10 + frame.payload.len());
    prop_assert_eq!(&decode_frame(&bytes).unwrap(), frame);
    let bit = bit_seed % (bytes.len() * 8);
    let mut flipped = bytes.clone();
    flipped[bit / 8] ^= 1 << (bit % 8);
    prop_assert_eq!(decode_frame(&flipped), Err(FrameError::Checksum));
    Ok(())
}

// ============================================================================
// Scenarios
// ============================================================================

fn arb_position(max_floor: i32) -> impl Strategy<Value = Position> {
    (0.0..40.0f64, -10.0..10.0f64, 0..=max_floor).prop_map(|(x, y, f)| Position::new(x, y, f))
}

fn arb_obstacle() -> impl Strategy<Value = Obstacle> {
    (
        prop::sample::select(ObstacleKind::ALL.to_vec()),
        1.0..39.0f64,
        0..=1i32,
    )
        .prop_map(|(kind, x, floor)| {
            Obstacle::new(
                kind,
                Position::new(x, -10.0, floor),
                Position::new(x, 10.0, floor),
            )
        })
}

fn arb_sensors() -> impl Strategy<Value = Vec<SensorModel>> {
    (1u8..8, 0.0..1.0f64).prop_map(|(mask, noise)| {
        SensorKind::ALL
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &k)| SensorModel::new(k, Signal::Constant { level: 10.0 }).with_noise(noise))
            .collect()
    })
}

#[derive(Debug, Clone)]
struct EdDraw {
    position: Position,
    period: f64,
    sensors: Vec<SensorModel>,
    capacity: Option<f64>,
}

fn arb_ed() -> impl Strategy<Value = EdDraw> {
    (
        arb_position(1),
        prop::sample::select(vec![56.0, 120.0, 300.0, 600.0]),
        arb_sensors(),
        prop::option::weighted(0.3, 0.3..4.0f64),
    )
        .prop_map(|(position, period, sensors, capacity)| EdDraw {
            position,
            period,
            sensors,
            capacity,
        })
}

/// Random valid scenarios: one Coordinator, up to three Routers, one to four
/// End Devices, a few walls over two floors.
pub fn arb_scenario() -> impl Strategy<Value = ScenarioConfig> {
    let layout = (
        prop::collection::vec(arb_position(1), 0..=3),
        prop::collection::vec(arb_ed(), 1..=4),
        prop::collection::vec(arb_obstacle(), 0..=4),
    );
    let radio = (-45.0..-30.0f64, prop::sample::select(vec![0.0, 0.0, 2.0]));
    let knobs = (
        prop::sample::select(vec![10.0, 60.0, 120.0]),
        0u32..=2,
        2.0..8.0f64,
        prop::option::of(0.0..0.5f64),
        any::<u64>(),
    );
    (layout, radio, knobs).prop_map(
        |((routers, eds, obstacles), (sensitivity, sigma), (warmup, retries, timeout, airtime, seed))| {
            let mut r = RadioConfig::with_sensitivity(sensitivity);
            r.shadowing_sigma_db = sigma;
            let mut nodes = vec![NodeSpec::coordinator(Position::new(0.0, 0.0, 0), r)];
            for (i, p) in routers.into_iter().enumerate() {
                nodes.push(NodeSpec::router(NodeId(1 + i as u16), p, r));
            }
            let base = nodes.len() as u16;
            for (i, e) in eds.into_iter().enumerate() {
                let mut n = NodeSpec::end_device(NodeId(base + i as u16), e.position, r, e.period, e.sensors);
                if let Some(c) = e.capacity {
                    n.battery = Some(BatteryState::full(c));
                }
                nodes.push(n);
            }
            let mut cfg = ScenarioConfig::with_nodes(nodes);
            cfg.obstacles = obstacles;
            cfg.warmup_delay_s = warmup;
            cfg.max_retries = retries;
            cfg.response_timeout_s = timeout;
            cfg.tx_airtime_override_s = airtime;
            cfg.seed = seed;
            cfg
        },
    )
}

/// A scenario, a horizon and an optional mid-run SET_PERIOD.
#[derive(Debug, Clone)]
pub struct RunCase {
    pub cfg: ScenarioConfig,
    pub horizon: SimTime,
    pub set_period: Option<(SimTime, u32)>,
}

pub fn arb_run_case() -> impl Strategy<Value = RunCase> {
    (
        arb_scenario(),
        600u64..2400,
        prop::option::of((0.0..1.0f64, prop::sample::select(vec![60u32, 200, 900]))),
    )
        .prop_map(|(cfg, horizon_s, cmd)| RunCase {
            cfg,
            horizon: SimTime::from_secs(horizon_s),
            set_period: cmd.map(|(frac, p)| (SimTime::from_secs_f64(frac * horizon_s as f64), p)),
        })
}

pub fn execute(case: &RunCase) -> Simulation {
    let mut sim = Simulation::new(case.cfg.clone())
        .expect("generated scenarios are valid")
        .with_trace(true);
    if let Some((at, seconds)) = case.set_period {
        sim.run_until(at);
        if let Some(ed) = case.cfg.end_devices().next() {
            sim.inject(Command::SetPeriod { node: ed.id, seconds });
        }
    }
    sim.run_until(case.horizon);
    sim
}

// ============================================================================
// Property checks
// ============================================================================

/// Every attached node reaches the Coordinator without revisiting a node,
/// over links that close in both directions; only the Coordinator and
/// Routers have children; every enabled node is attached or unreachable.
pub fn check_parent_table(cfg: &ScenarioConfig) -> Result<(), TestCaseError> {
    let table = build_parent_table(cfg);
    let root = NodeId::COORDINATOR;
    prop_assert_eq!(table.root(), Some(root));
    for (&node, entry) in table.entries() {
        let mut seen = BTreeSet::from([node]);
        let mut cur = node;
        let mut hops = 0;
        while cur != root {
            let parent = table.parent(cur).expect("attached nodes have a parent");
            prop_assert!(seen.insert(parent), "cycle through {}", parent);
            let p_role = cfg.node(parent).unwrap().role;
            prop_assert!(p_role != NodeRole::EndDevice, "end device {} has a child", parent);
            let down = link_budget(cfg, parent, cur).unwrap();
            let up = link_budget(cfg, cur, parent).unwrap();
            prop_assert!(is_connected(&down, cfg.node(cur).unwrap().radio.sensitivity_dbm));
            prop_assert!(is_connected(&up, cfg.node(parent).unwrap().radio.sensitivity_dbm));
            cur = parent;
            hops += 1;
        }
        prop_assert_eq!(entry.hops, hops);
    }
    let covered: BTreeSet<NodeId> = table
        .entries()
        .keys()
        .chain(table.unreachable().iter())
        .copied()
        .chain([root])
        .collect();
    let enabled: BTreeSet<NodeId> = cfg.nodes.iter().filter(|n| n.enabled).map(|n| n.id).collect();
    prop_assert_eq!(covered, enabled);
    Ok(())
}

/// Per device: the Coordinator sends nothing before an AWAKE opens a round,
/// each round's last Coordinator frame is SLEEP_REQ, and a gauge device never
/// gets SAMPLE_REQ before the warmup delay has passed since HEAT_GAUGE_REQ.
pub fn check_round_ordering(case: &RunCase, sim: &Simulation) -> Result<(), TestCaseError> {
    let coord = NodeId::COORDINATOR;
    let warmup = SimTime::from_secs_f64(case.cfg.warmup_delay_s);
    let mut in_round: BTreeMap<NodeId, bool> = BTreeMap::new();
    let mut heat_at: BTreeMap<NodeId, SimTime> = BTreeMap::new();
    for s in sim.sent_frames() {
        let f = &s.frame;
        if f.src != coord && f.kind == MessageKind::Awake {
            in_round.insert(f.src, true);
            heat_at.remove(&f.src);
            continue;
        }
        if f.src != coord {
            continue;
        }
        let open = in_round.get(&f.dst).copied().unwrap_or(false);
        match f.kind {
            MessageKind::HeatGaugeReq => {
                prop_assert!(open, "HEAT_GAUGE_REQ to {} outside a round at {}", f.dst, s.at);
                heat_at.insert(f.dst, s.at);
            }
            MessageKind::SampleReq => {
                prop_assert!(open, "SAMPLE_REQ to {} outside a round at {}", f.dst, s.at);
                let gauge = case.cfg.node(f.dst).unwrap().needs_heating();
                if gauge {
                    let h = heat_at.get(&f.dst).copied();
                    prop_assert!(
                        h.is_some_and(|h| s.at >= h + warmup),
                        "SAMPLE_REQ to gauge device {} at {} before warmup",
                        f.dst,
                        s.at
                    );
                }
            }
            MessageKind::SleepReq => {
                prop_assert!(open, "SLEEP_REQ to {} outside a round at {}", f.dst, s.at);
                in_round.insert(f.dst, false);
            }
            _ => {}
        }
    }
    Ok(())
}

/// Ledgers balance, account for every tick until the horizon (or death),
/// and battery charge is capacity minus consumption.
pub fn check_energy(case: &RunCase, sim: &Simulation) -> Result<(), TestCaseError> {
    prop_assert!(sim.energy_balanced());
    for id in sim.node_ids() {
        let l = sim.ledger(id).unwrap();
        let end = l.died_at.unwrap_or(case.horizon);
        prop_assert_eq!(
            l.elapsed(),
            end,
            "node {} ledger covers {} not {}",
            id,
            l.elapsed(),
            end
        );
        if let Some(b) = sim.battery(id) {
            prop_assert!(b.remaining_mah >= 0.0);
            let expect = b.capacity_mah - l.consumed_mah;
            prop_assert!(
                (b.remaining_mah - expect).abs() <= 1e-9 * b.capacity_mah.max(1.0),
                "node {}: remaining {} vs {}",
                id,
                b.remaining_mah,
                expect
            );
            if l.died_at.is_some() {
                prop_assert_eq!(b.remaining_mah, 0.0);
            }
        }
    }
    Ok(())
}

/// Everything a run produces, as bytes.
pub fn run_fingerprint(sim: &Simulation) -> (String, Vec<u8>, String) {
    let trace: String = sim.trace().iter().map(|l| format!("{l}\n")).collect();
    let mut csv = Vec::new();
    write_samples_csv(&mut csv, sim.samples()).unwrap();
    (trace, csv, RunReport::from_simulation(sim).to_json())
}

pub fn check_determinism(case: &RunCase) -> Result<(), TestCaseError> {
    let a = run_fingerprint(&execute(case));
    let b = run_fingerprint(&execute(case));
    prop_assert!(a == b, "two runs of the same case differ");
    Ok(())
}

// ============================================================================
// Fixtures
// ============================================================================

pub fn canned_scenario_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/building.json")
}

/// Coordinator plus one End Device in direct range.
pub fn single_hop(period_s: f64, sensors: Vec<SensorModel>) -> ScenarioConfig {
    let r = RadioConfig::with_sensitivity(-40.0);
    ScenarioConfig::with_nodes(vec![
        NodeSpec::coordinator(Position::new(0.0, 0.0, 0), r),
        NodeSpec::end_device(NodeId(1), Position::new(3.0, 0.0, 0), r, period_s, sensors),
    ])
}

pub fn temperature() -> SensorModel {
    SensorModel::new(SensorKind::TemperatureCatheter, Signal::Constant { level: 36.8 })
}

pub fn gauge() -> SensorModel {
    SensorModel::new(SensorKind::StrainGauge, Signal::Constant { level: 120.0 })
}
