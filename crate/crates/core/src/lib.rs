//! Discrete-event simulator for a duty-cycled wireless sensor network: a
//! Coordinator, mains-powered Routers and battery-powered End Devices that
//! sleep on a poll grid and wake periodically to deliver sensor readings.
//!
//! The crate is organised bottom-up:
//!
//! - [`engine`]: virtual clock, event queue, seeded random streams, trace lines
//! - [`model`]: node, obstacle and scenario types, scenario files, validation
//! - [`propagation`]: tabulated path loss, obstacle losses, link budgets, RSSI
//! - [`power`]: consumption profile, cyclic sleep, battery ledger, lifetime
//! - [`sensors`]: synthetic sensor signals and the strain-gauge heating window
//! - [`protocol`]: frame codec, End Device and Coordinator state machines, routing
//! - [`world`]: the whole-network simulation
//! - [`report`] and [`cli`]: run outputs and the `wsn-pathosim` front end
//!
//! ```
//! use pathosim::engine::SimTime;
//! use pathosim::model::{NodeId, NodeSpec, Position, RadioConfig, ScenarioConfig};
//! use pathosim::sensors::{SensorKind, SensorModel, Signal};
//! use pathosim::world::Simulation;
//!
//! let radio = RadioConfig::with_sensitivity(-40.0);
//! let probe = SensorModel::new(SensorKind::TemperatureCatheter, Signal::Constant { level: 37.0 });
//! let cfg = ScenarioConfig::with_nodes(vec![
//!     NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
//!     NodeSpec::end_device(NodeId(1), Position::new(3.0, 0.0, 0), radio, 1800.0, vec![probe]),
//! ]);
//! let mut sim = Simulation::new(cfg).unwrap();
//! sim.run_until(SimTime::from_secs(3600));
//! assert_eq!(sim.samples().len(), 2);
//! ```

// NaN-rejecting range checks read as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod engine;
pub mod model;
pub mod power;
pub mod propagation;
pub mod protocol;
pub mod report;
pub mod sensors;
pub mod world;
