//! Domain types and scenario configuration.
//!
//! A scenario file is a strict JSON document (unknown keys are rejected)
//! with top-level keys `nodes`, `obstacles`, `channels`, `seed` and
//! `defaults`. Parsing resolves every optional field against `defaults` and
//! then the built-in defaults, so a [`ScenarioConfig`] is always fully
//! populated. [`serialize_scenario`] writes every resolved field back out,
//! which makes parse/serialize a field-for-field round trip.
//!
//! See `docs/scenario-schema.md` for the schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::power::{BatteryState, ConsumptionProfile};
use crate::sensors::{SensorModel, DEFAULT_HEAT_DURATION_S};

// ============================================================================
// Identifiers and roles
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub const COORDINATOR: NodeId = NodeId(0);
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Coordinator,
    Router,
    EndDevice,
}

impl NodeRole {
    /// Whether the node may act as a parent in the routing tree.
    pub fn can_route(self) -> bool {
        !matches!(self, NodeRole::EndDevice)
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRole::Coordinator => "coordinator",
            NodeRole::Router => "router",
            NodeRole::EndDevice => "end_device",
        })
    }
}

// ============================================================================
// Geometry and obstacles
// ============================================================================

/// Planar position in meters plus an integer floor index.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub floor: i32,
}

impl Position {
    pub fn new(x: f64, y: f64, floor: i32) -> Self {
        Self { x, y, floor }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Planar distance; floors do not add distance.
    pub fn distance_2d(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleKind {
    WindowOpenBlinds,
    WindowClosedBlinds,
    WallOpenDoor,
    WallClosedDoor,
    BrickWall,
}

impl ObstacleKind {
    pub const ALL: [ObstacleKind; 5] = [
        ObstacleKind::WindowOpenBlinds,
        ObstacleKind::WindowClosedBlinds,
        ObstacleKind::WallOpenDoor,
        ObstacleKind::WallClosedDoor,
        ObstacleKind::BrickWall,
    ];

    /// Measured mean attenuation in dB.
    pub fn default_attenuation(self) -> f64 {
        match self {
            ObstacleKind::WindowOpenBlinds => 1.04,
            ObstacleKind::WindowClosedBlinds => 3.95,
            ObstacleKind::WallOpenDoor => 0.39,
            ObstacleKind::WallClosedDoor => 1.19,
            ObstacleKind::BrickWall => 1.46,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObstacleKind::WindowOpenBlinds => "window_open_blinds",
            ObstacleKind::WindowClosedBlinds => "window_closed_blinds",
            ObstacleKind::WallOpenDoor => "wall_open_door",
            ObstacleKind::WallClosedDoor => "wall_closed_door",
            ObstacleKind::BrickWall => "brick_wall",
        }
    }
}

/// Attenuation per floor crossed, dB.
pub const DEFAULT_FLOOR_LOSS_DB: f64 = 13.08;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub kind: ObstacleKind,
    pub attenuation_db: f64,
    pub from: Position,
    pub to: Position,
}

impl Obstacle {
    pub fn new(kind: ObstacleKind, from: Position, to: Position) -> Self {
        Self {
            kind,
            attenuation_db: kind.default_attenuation(),
            from,
            to,
        }
    }

    pub fn floor(&self) -> i32 {
        self.from.floor
    }
}

/// Something a radio path passes through.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathObstruction {
    Obstacle { kind: ObstacleKind, attenuation_db: f64 },
    FloorCrossing,
}

// ============================================================================
// Nodes and scenario
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub sensitivity_dbm: f64,
    pub shadowing_sigma_db: f64,
    /// Radio poll period of End Devices.
    pub poll_period_s: f64,
    pub bitrate_bps: u32,
}

impl RadioConfig {
    pub const DEFAULT_TX_POWER_DBM: f64 = 3.0;
    pub const DEFAULT_POLL_PERIOD_S: f64 = 28.0;
    pub const DEFAULT_BITRATE_BPS: u32 = 250_000;

    pub fn with_sensitivity(sensitivity_dbm: f64) -> Self {
        Self {
            tx_power_dbm: Self::DEFAULT_TX_POWER_DBM,
            sensitivity_dbm,
            shadowing_sigma_db: 0.0,
            poll_period_s: Self::DEFAULT_POLL_PERIOD_S,
            bitrate_bps: Self::DEFAULT_BITRATE_BPS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
    pub position: Position,
    pub radio: RadioConfig,
    pub battery: Option<BatteryState>,
    pub sensors: Vec<SensorModel>,
    /// Requested sampling period of End Devices.
    pub sample_period_s: Option<f64>,
    /// Disabled nodes stay in the file but take no part in the network.
    pub enabled: bool,
}

impl NodeSpec {
    pub fn coordinator(position: Position, radio: RadioConfig) -> Self {
        Self {
            id: NodeId::COORDINATOR,
            role: NodeRole::Coordinator,
            position,
            radio,
            battery: None,
            sensors: vec![],
            sample_period_s: None,
            enabled: true,
        }
    }

    pub fn router(id: NodeId, position: Position, radio: RadioConfig) -> Self {
        Self {
            id,
            role: NodeRole::Router,
            ..Self::coordinator(position, radio)
        }
    }

    pub fn end_device(
        id: NodeId,
        position: Position,
        radio: RadioConfig,
        sample_period_s: f64,
        sensors: Vec<SensorModel>,
    ) -> Self {
        Self {
            id,
            role: NodeRole::EndDevice,
            position,
            radio,
            battery: Some(BatteryState::default()),
            sensors,
            sample_period_s: Some(sample_period_s),
            enabled: true,
        }
    }

    pub fn needs_heating(&self) -> bool {
        self.sensors.iter().any(|s| s.kind.requires_heating())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub nodes: Vec<NodeSpec>,
    pub obstacles: Vec<Obstacle>,
    pub floor_loss_db: f64,
    pub channels: BTreeMap<u8, f64>,
    pub seed: u64,
    pub warmup_delay_s: f64,
    pub response_timeout_s: f64,
    pub max_retries: u32,
    pub tx_airtime_override_s: Option<f64>,
    /// Time an End Device radio stays up at each poll wake.
    pub poll_wake_s: f64,
    pub consumption: ConsumptionProfile,
}

impl ScenarioConfig {
    pub const DEFAULT_WARMUP_DELAY_S: f64 = 120.0;
    pub const DEFAULT_RESPONSE_TIMEOUT_S: f64 = 5.0;
    pub const DEFAULT_MAX_RETRIES: u32 = 2;
    pub const DEFAULT_POLL_WAKE_S: f64 = 0.1;
    pub const DEFAULT_CHANNEL: u8 = 11;

    /// A scenario with the given nodes and every knob at its default.
    pub fn with_nodes(nodes: Vec<NodeSpec>) -> Self {
        Self {
            nodes,
            obstacles: vec![],
            floor_loss_db: DEFAULT_FLOOR_LOSS_DB,
            channels: BTreeMap::from([(Self::DEFAULT_CHANNEL, 0.0)]),
            seed: 0,
            warmup_delay_s: Self::DEFAULT_WARMUP_DELAY_S,
            response_timeout_s: Self::DEFAULT_RESPONSE_TIMEOUT_S,
            max_retries: Self::DEFAULT_MAX_RETRIES,
            tx_airtime_override_s: None,
            poll_wake_s: Self::DEFAULT_POLL_WAKE_S,
            consumption: ConsumptionProfile::default(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_mut(&mut self, id: NodeId) -> Option<&mut NodeSpec> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn require_node(&self, id: NodeId) -> Result<&NodeSpec, ModelError> {
        self.node(id).ok_or(ModelError::UnknownNode(id))
    }

    pub fn coordinator(&self) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.role == NodeRole::Coordinator)
    }

    pub fn end_devices(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.role == NodeRole::EndDevice)
    }

    /// Copy of the scenario with one node switched on or off.
    pub fn with_node_enabled(&self, id: NodeId, enabled: bool) -> Self {
        let mut cfg = self.clone();
        if let Some(n) = cfg.node_mut(id) {
            n.enabled = enabled;
        }
        cfg
    }
}

// ============================================================================
// Errors
// ============================================================================

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("a path needs two distinct nodes, got {0} twice")]
    SameNode(NodeId),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match e.classify() {
            Category::Syntax | Category::Eof | Category::Io => ModelError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            },
            Category::Data => ModelError::Schema(e.to_string()),
        }
    }
}

// ============================================================================
// File representation
// ============================================================================

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default)]
    defaults: DefaultsFile,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    obstacles: Vec<ObstacleFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channels: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DefaultsFile {
    #[serde(default, skip_serializing_if = "RadioFile::is_empty")]
    radio: RadioFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    battery_capacity_mah: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    heat_duration_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor_loss_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    warmup_delay_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    response_timeout_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tx_airtime_override_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poll_wake_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    consumption: Option<ConsumptionProfile>,
}

#[derive(Debug, Default, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RadioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tx_power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sensitivity_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shadowing_sigma_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poll_period_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bitrate_bps: Option<u32>,
}

impl RadioFile {
    fn is_empty(&self) -> bool {
        self.tx_power_dbm.is_none()
            && self.sensitivity_dbm.is_none()
            && self.shadowing_sigma_db.is_none()
            && self.poll_period_s.is_none()
            && self.bitrate_bps.is_none()
    }

    fn or(self, fallback: RadioFile) -> RadioFile {
        RadioFile {
            tx_power_dbm: self.tx_power_dbm.or(fallback.tx_power_dbm),
            sensitivity_dbm: self.sensitivity_dbm.or(fallback.sensitivity_dbm),
            shadowing_sigma_db: self.shadowing_sigma_db.or(fallback.shadowing_sigma_db),
            poll_period_s: self.poll_period_s.or(fallback.poll_period_s),
            bitrate_bps: self.bitrate_bps.or(fallback.bitrate_bps),
        }
    }
}

impl From<RadioConfig> for RadioFile {
    fn from(r: RadioConfig) -> Self {
        RadioFile {
            tx_power_dbm: Some(r.tx_power_dbm),
            sensitivity_dbm: Some(r.sensitivity_dbm),
            shadowing_sigma_db: Some(r.shadowing_sigma_db),
            poll_period_s: Some(r.poll_period_s),
            bitrate_bps: Some(r.bitrate_bps),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatteryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    capacity_mah: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    remaining_mah: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: u16,
    role: NodeRole,
    position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radio: Option<RadioFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    battery: Option<BatteryFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sensors: Vec<SensorModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_period_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleFile {
    kind: ObstacleKind,
    from: Position,
    to: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attenuation_db: Option<f64>,
}

// ============================================================================
// Parse / serialize
// ============================================================================

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ModelError> {
    let file: ScenarioFile = serde_json::from_str(text)?;
    resolve(file)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

fn resolve(file: ScenarioFile) -> Result<ScenarioConfig, ModelError> {
    let d = &file.defaults;
    let builtin = RadioFile {
        tx_power_dbm: Some(RadioConfig::DEFAULT_TX_POWER_DBM),
        sensitivity_dbm: None,
        shadowing_sigma_db: Some(0.0),
        poll_period_s: Some(RadioConfig::DEFAULT_POLL_PERIOD_S),
        bitrate_bps: Some(RadioConfig::DEFAULT_BITRATE_BPS),
    };
    let default_radio = d.radio.or(builtin);
    let capacity = d
        .battery_capacity_mah
        .unwrap_or(BatteryState::DEFAULT_CAPACITY_MAH);
    let heat = d.heat_duration_s.unwrap_or(DEFAULT_HEAT_DURATION_S);

    let mut seen = BTreeSet::new();
    let mut nodes = Vec::with_capacity(file.nodes.len());
    for n in file.nodes {
        let id = NodeId(n.id);
        if !seen.insert(id) {
            return Err(ModelError::Schema(format!("duplicate node id {id}")));
        }
        let r = n.radio.unwrap_or_default().or(default_radio);
        let sensitivity_dbm = r.sensitivity_dbm.ok_or_else(|| {
            ModelError::Schema(format!(
                "node {id}: radio.sensitivity_dbm is required (set it on the node or in defaults.radio)"
            ))
        })?;
        let radio = RadioConfig {
            tx_power_dbm: r.tx_power_dbm.unwrap_or(RadioConfig::DEFAULT_TX_POWER_DBM),
            sensitivity_dbm,
            shadowing_sigma_db: r.shadowing_sigma_db.unwrap_or(0.0),
            poll_period_s: r.poll_period_s.unwrap_or(RadioConfig::DEFAULT_POLL_PERIOD_S),
            bitrate_bps: r.bitrate_bps.unwrap_or(RadioConfig::DEFAULT_BITRATE_BPS),
        };
        let battery = match (n.battery, n.role) {
            (Some(b), _) => {
                let cap = b.capacity_mah.unwrap_or(capacity);
                Some(BatteryState {
                    capacity_mah: cap,
                    remaining_mah: b.remaining_mah.unwrap_or(cap),
                })
            }
            (None, NodeRole::EndDevice) => Some(BatteryState::full(capacity)),
            (None, _) => None,
        };
        let sensors = n
            .sensors
            .into_iter()
            .map(|mut s| {
                if s.kind.requires_heating() && s.heat_duration_s.is_none() {
                    s.heat_duration_s = Some(heat);
                }
                s
            })
            .collect();
        nodes.push(NodeSpec {
            id,
            role: n.role,
            position: n.position,
            radio,
            battery,
            sensors,
            sample_period_s: n.sample_period_s,
            enabled: n.enabled.unwrap_or(true),
        });
    }
    if !nodes.iter().any(|n| n.role == NodeRole::Coordinator) {
        return Err(ModelError::Schema("scenario has no coordinator".into()));
    }

    let obstacles = file
        .obstacles
        .into_iter()
        .map(|o| Obstacle {
            kind: o.kind,
            attenuation_db: o.attenuation_db.unwrap_or(o.kind.default_attenuation()),
            from: o.from,
            to: o.to,
        })
        .collect();

    let channels = match file.channels {
        None => BTreeMap::from([(ScenarioConfig::DEFAULT_CHANNEL, 0.0)]),
        Some(map) => map
            .into_iter()
            .map(|(k, v)| {
                k.trim()
                    .parse::<u8>()
                    .map(|id| (id, v))
                    .map_err(|_| ModelError::Schema(format!("channel id {k:?} is not an integer")))
            })
            .collect::<Result<_, _>>()?,
    };

    Ok(ScenarioConfig {
        nodes,
        obstacles,
        floor_loss_db: d.floor_loss_db.unwrap_or(DEFAULT_FLOOR_LOSS_DB),
        channels,
        seed: file.seed.unwrap_or(0),
        warmup_delay_s: d.warmup_delay_s.unwrap_or(ScenarioConfig::DEFAULT_WARMUP_DELAY_S),
        response_timeout_s: d
            .response_timeout_s
            .unwrap_or(ScenarioConfig::DEFAULT_RESPONSE_TIMEOUT_S),
        max_retries: d.max_retries.unwrap_or(ScenarioConfig::DEFAULT_MAX_RETRIES),
        tx_airtime_override_s: d.tx_airtime_override_s,
        poll_wake_s: d.poll_wake_s.unwrap_or(ScenarioConfig::DEFAULT_POLL_WAKE_S),
        consumption: d.consumption.unwrap_or_default(),
    })
}

/// Writes a scenario file with every resolved field spelled out.
pub fn serialize_scenario(cfg: &ScenarioConfig) -> String {
    let file = ScenarioFile {
        seed: Some(cfg.seed),
        defaults: DefaultsFile {
            radio: RadioFile::default(),
            battery_capacity_mah: None,
            heat_duration_s: None,
            floor_loss_db: Some(cfg.floor_loss_db),
            warmup_delay_s: Some(cfg.warmup_delay_s),
            response_timeout_s: Some(cfg.response_timeout_s),
            max_retries: Some(cfg.max_retries),
            tx_airtime_override_s: cfg.tx_airtime_override_s,
            poll_wake_s: Some(cfg.poll_wake_s),
            consumption: Some(cfg.consumption),
        },
        nodes: cfg
            .nodes
            .iter()
            .map(|n| NodeFile {
                id: n.id.0,
                role: n.role,
                position: n.position,
                radio: Some(n.radio.into()),
                battery: n.battery.map(|b| BatteryFile {
                    capacity_mah: Some(b.capacity_mah),
                    remaining_mah: Some(b.remaining_mah),
                }),
                sensors: n.sensors.clone(),
                sample_period_s: n.sample_period_s,
                enabled: Some(n.enabled),
            })
            .collect(),
        obstacles: cfg
            .obstacles
            .iter()
            .map(|o| ObstacleFile {
                kind: o.kind,
                from: o.from,
                to: o.to,
                attenuation_db: Some(o.attenuation_db),
            })
            .collect(),
        channels: Some(cfg.channels.iter().map(|(k, v)| (k.to_string(), *v)).collect()),
    };
    serde_json::to_string_pretty(&file).expect("scenario serialization cannot fail")
}

// ============================================================================
// Validation
// ============================================================================

/// One broken rule: which subject, which field, and what rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subject: String,
    pub field: &'static str,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.subject, self.field, self.rule)
    }
}

pub fn validate_scenario(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, field: &'static str, rule: &str| {
        out.push(Violation {
            subject,
            field,
            rule: rule.to_string(),
        })
    };
    let scenario = || "scenario".to_string();

    let coordinators = cfg
        .nodes
        .iter()
        .filter(|n| n.role == NodeRole::Coordinator)
        .count();
    if coordinators != 1 {
        push(scenario(), "nodes", "exactly one Coordinator");
    }
    let mut seen = BTreeSet::new();
    for n in &cfg.nodes {
        if !seen.insert(n.id) {
            push(format!("node {}", n.id), "id", "node ids must be unique");
        }
    }

    for n in &cfg.nodes {
        let who = || format!("node {}", n.id);
        match (n.role, n.id == NodeId::COORDINATOR) {
            (NodeRole::Coordinator, false) => push(who(), "id", "the Coordinator must have id 0"),
            (NodeRole::Router | NodeRole::EndDevice, true) => {
                push(who(), "id", "id 0 is reserved for the Coordinator")
            }
            _ => {}
        }
        if n.role == NodeRole::Coordinator && !n.enabled {
            push(who(), "enabled", "the Coordinator cannot be disabled");
        }
        if !n.position.is_finite() {
            push(who(), "position", "coordinates must be finite");
        }
        let r = &n.radio;
        if !r.tx_power_dbm.is_finite() {
            push(who(), "radio.tx_power_dbm", "must be finite");
        }
        if !r.sensitivity_dbm.is_finite() {
            push(who(), "radio.sensitivity_dbm", "must be finite");
        }
        if !(r.shadowing_sigma_db >= 0.0) {
            push(who(), "radio.shadowing_sigma_db", "must be >= 0");
        }
        if !(r.poll_period_s > 0.0) {
            push(who(), "radio.poll_period_s", "must be > 0");
        }
        if r.bitrate_bps == 0 {
            push(who(), "radio.bitrate_bps", "must be > 0");
        }

        match n.role {
            NodeRole::EndDevice => {
                match n.battery {
                    None => push(who(), "battery", "End Devices must have a battery"),
                    Some(b) => {
                        if !(b.capacity_mah >= 0.0) {
                            push(who(), "battery.capacity_mah", "must be >= 0");
                        }
                        if !(b.remaining_mah >= 0.0 && b.remaining_mah <= b.capacity_mah) {
                            push(who(), "battery.remaining_mah", "0 <= remaining <= capacity");
                        }
                    }
                }
                match n.sample_period_s {
                    None => push(who(), "sample_period_s", "End Devices need a sample_period"),
                    Some(p) if !(p > 0.0) => push(who(), "sample_period_s", "must be > 0"),
                    Some(p) if p < r.poll_period_s => {
                        push(who(), "sample_period_s", "sample_period < poll_period")
                    }
                    Some(_) => {}
                }
            }
            NodeRole::Coordinator | NodeRole::Router => {
                if n.battery.is_some() {
                    push(who(), "battery", "Coordinator and Routers are mains-powered");
                }
                if n.sample_period_s.is_some() {
                    push(who(), "sample_period_s", "only End Devices sample");
                }
                if !n.sensors.is_empty() {
                    push(who(), "sensors", "only End Devices carry sensors");
                }
            }
        }

        for (i, s) in n.sensors.iter().enumerate() {
            let field = "sensors";
            if !(s.noise_sigma >= 0.0) {
                push(
                    format!("node {} sensor {i}", n.id),
                    field,
                    "noise_sigma must be >= 0",
                );
            }
            match (s.kind.requires_heating(), s.heat_duration_s) {
                (true, Some(h)) if h > 0.0 => {}
                (true, _) => push(
                    format!("node {} sensor {i}", n.id),
                    field,
                    "strain gauges need heat_duration > 0",
                ),
                (false, Some(_)) => push(
                    format!("node {} sensor {i}", n.id),
                    field,
                    "heat_duration only applies to strain gauges",
                ),
                (false, None) => {}
            }
            if let crate::sensors::Signal::Sinusoid { period_hours, .. } = s.signal {
                if !(period_hours > 0.0) {
                    push(
                        format!("node {} sensor {i}", n.id),
                        field,
                        "sinusoid period must be > 0",
                    );
                }
            }
        }
    }

    for (i, o) in cfg.obstacles.iter().enumerate() {
        let who = || format!("obstacle {i}");
        if o.from.floor != o.to.floor {
            push(who(), "segment", "endpoints must be on the same floor");
        }
        if !(o.from.is_finite() && o.to.is_finite()) {
            push(who(), "segment", "coordinates must be finite");
        } else if o.from.x == o.to.x && o.from.y == o.to.y {
            push(who(), "segment", "zero-length segment");
        }
        if !(o.attenuation_db >= 0.0) {
            push(who(), "attenuation_db", "must be >= 0");
        }
    }

    if !(cfg.floor_loss_db >= 0.0) {
        push(scenario(), "floor_loss_db", "must be >= 0");
    }
    if cfg.channels.is_empty() {
        push(scenario(), "channels", "at least one channel");
    }
    for (&id, &level) in &cfg.channels {
        if !(11..=26).contains(&id) {
            push(scenario(), "channels", &format!("channel {id} outside 11..=26"));
        }
        if !(level >= 0.0) {
            push(
                scenario(),
                "channels",
                &format!("channel {id} interference must be >= 0"),
            );
        }
    }
    if !(cfg.warmup_delay_s >= 0.0) {
        push(scenario(), "warmup_delay_s", "must be >= 0");
    }
    if !(cfg.response_timeout_s > 0.0) {
        push(scenario(), "response_timeout_s", "must be > 0");
    }
    if let Some(t) = cfg.tx_airtime_override_s {
        if !(t >= 0.0) {
            push(scenario(), "tx_airtime_override_s", "must be >= 0");
        }
    }
    if !(cfg.poll_wake_s >= 0.0) {
        push(scenario(), "poll_wake_s", "must be >= 0");
    }
    let c = &cfg.consumption;
    if !(c.sleeping_ma >= 0.0 && c.sleeping_ma <= c.awake_idle_ma && c.awake_idle_ma <= c.transmitting_ma) {
        push(
            scenario(),
            "consumption",
            "0 <= sleeping <= awake_idle <= transmitting",
        );
    }
    out
}

// ============================================================================
// Path geometry
// ============================================================================

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn opposite_sides(d1: f64, d2: f64) -> bool {
    (d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)
}

/// Strict crossing of segments `p1-p2` and `q1-q2`. Returns the crossing's
/// parameter along `p1-p2`. Touching at an endpoint and collinear overlap do
/// not count.
pub fn segment_crossing(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> Option<f64> {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if opposite_sides(d1, d2) && opposite_sides(d3, d4) {
        Some(d1 / (d1 - d2))
    } else {
        None
    }
}

/// Obstacles crossed by the straight path from `a` to `b`, in order along
/// the path, followed by one [`PathObstruction::FloorCrossing`] per floor of
/// difference. Obstacles on any floor the path spans are considered.
pub fn obstacles_on_path(
    cfg: &ScenarioConfig,
    a: NodeId,
    b: NodeId,
) -> Result<Vec<PathObstruction>, ModelError> {
    if a == b {
        return Err(ModelError::SameNode(a));
    }
    let pa = cfg.require_node(a)?.position;
    let pb = cfg.require_node(b)?.position;
    let (lo, hi) = (pa.floor.min(pb.floor), pa.floor.max(pb.floor));

    let mut hits: Vec<(f64, usize)> = cfg
        .obstacles
        .iter()
        .enumerate()
        .filter(|(_, o)| o.from.floor == o.to.floor && (lo..=hi).contains(&o.floor()))
        .filter_map(|(i, o)| {
            segment_crossing((pa.x, pa.y), (pb.x, pb.y), (o.from.x, o.from.y), (o.to.x, o.to.y))
                .map(|t| (t, i))
        })
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut out: Vec<PathObstruction> = hits
        .into_iter()
        .map(|(_, i)| {
            let o = &cfg.obstacles[i];
            PathObstruction::Obstacle {
                kind: o.kind,
                attenuation_db: o.attenuation_db,
            }
        })
        .collect();
    let floors = (hi - lo) as usize;
    out.extend(std::iter::repeat_n(PathObstruction::FloorCrossing, floors));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "defaults": { "radio": { "sensitivity_dbm": -40 } },
        "nodes": [ { "id": 0, "role": "coordinator", "position": { "x": 0, "y": 0, "floor": 0 } } ]
    }"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.nodes.len(), 1);
        let r = cfg.nodes[0].radio;
        assert_eq!(r.tx_power_dbm, 3.0);
        assert_eq!(r.poll_period_s, 28.0);
        assert_eq!(r.bitrate_bps, 250_000);
        assert_eq!(cfg.floor_loss_db, 13.08);
        assert_eq!(cfg.warmup_delay_s, 120.0);
        assert_eq!(cfg.response_timeout_s, 5.0);
        assert_eq!(cfg.max_retries, 2);
        assert!(validate_scenario(&cfg).is_empty());
    }

    #[test]
    fn empty_node_list_is_schema_error() {
        let err = parse_scenario(r#"{"nodes": []}"#).unwrap_err();
        assert!(
            matches!(err, ModelError::Schema(ref m) if m.contains("coordinator")),
            "{err}"
        );
    }

    #[test]
    fn duplicate_ids_are_schema_errors() {
        let text = r#"{
            "defaults": { "radio": { "sensitivity_dbm": -40 } },
            "nodes": [
                { "id": 0, "role": "coordinator", "position": { "x": 0, "y": 0 } },
                { "id": 7, "role": "router", "position": { "x": 1, "y": 0 } },
                { "id": 7, "role": "router", "position": { "x": 2, "y": 0 } }
            ]
        }"#;
        let err = parse_scenario(text).unwrap_err();
        assert!(
            matches!(err, ModelError::Schema(ref m) if m.contains("duplicate")),
            "{err}"
        );
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_scenario("{\n  \"nodes\": [\n    {,\n  ]\n}").unwrap_err();
        match err {
            ModelError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn unknown_keys_and_wrong_types_are_schema_errors() {
        let unknown = r#"{"nodes": [], "colour": 1}"#;
        assert!(matches!(parse_scenario(unknown), Err(ModelError::Schema(_))));
        let wrong = r#"{"seed": "abc", "nodes": []}"#;
        assert!(matches!(parse_scenario(wrong), Err(ModelError::Schema(_))));
        let nested = r#"{"defaults": {"radio": {"sensitivity_dbm": -40, "gain": 2}},
            "nodes": [{"id": 0, "role": "coordinator", "position": {"x": 0, "y": 0}}]}"#;
        assert!(matches!(parse_scenario(nested), Err(ModelError::Schema(_))));
    }

    #[test]
    fn missing_sensitivity_is_schema_error() {
        let text = r#"{"nodes": [{"id": 0, "role": "coordinator", "position": {"x": 0, "y": 0}}]}"#;
        assert!(matches!(parse_scenario(text), Err(ModelError::Schema(ref m)) if m.contains("sensitivity")));
    }

    fn two_node(sample_period: f64) -> ScenarioConfig {
        let radio = RadioConfig::with_sensitivity(-40.0);
        ScenarioConfig::with_nodes(vec![
            NodeSpec::coordinator(Position::new(0.0, 0.0, 0), radio),
            NodeSpec::end_device(
                NodeId(3),
                Position::new(1.0, 0.0, 0),
                radio,
                sample_period,
                vec![],
            ),
        ])
    }

    #[test]
    fn sample_period_below_poll_period_is_a_violation() {
        let v = validate_scenario(&two_node(10.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "node 3");
        assert_eq!(v[0].rule, "sample_period < poll_period");
        assert!(validate_scenario(&two_node(28.0)).is_empty());
    }

    #[test]
    fn two_coordinators_is_a_violation() {
        let mut cfg = two_node(1800.0);
        cfg.nodes[1].role = NodeRole::Coordinator;
        cfg.nodes[1].sample_period_s = None;
        cfg.nodes[1].battery = None;
        let v = validate_scenario(&cfg);
        assert!(v.iter().any(|v| v.rule == "exactly one Coordinator"), "{v:?}");
    }

    #[test]
    fn router_with_battery_is_a_violation() {
        let mut cfg = two_node(1800.0);
        let mut r = NodeSpec::router(NodeId(1), Position::new(2.0, 0.0, 0), cfg.nodes[0].radio);
        r.battery = Some(BatteryState::default());
        cfg.nodes.push(r);
        let v = validate_scenario(&cfg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "battery");
    }

    #[test]
    fn obstacle_rules() {
        let mut cfg = two_node(1800.0);
        cfg.obstacles.push(Obstacle::new(
            ObstacleKind::BrickWall,
            Position::new(0.0, 0.0, 0),
            Position::new(0.0, 0.0, 0),
        ));
        cfg.obstacles.push(Obstacle::new(
            ObstacleKind::BrickWall,
            Position::new(0.0, 0.0, 0),
            Position::new(1.0, 0.0, 1),
        ));
        let v = validate_scenario(&cfg);
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.iter().any(|v| v.rule == "zero-length segment"));
        assert!(v.iter().any(|v| v.rule.contains("same floor")));
    }

    #[test]
    fn table_attenuations() {
        let expected = [1.04, 3.95, 0.39, 1.19, 1.46];
        for (k, e) in ObstacleKind::ALL.iter().zip(expected) {
            assert_eq!(k.default_attenuation(), e);
        }
        assert_eq!(DEFAULT_FLOOR_LOSS_DB, 13.08);
    }

    fn path_cfg(pb: Position, obstacles: Vec<Obstacle>) -> ScenarioConfig {
        let radio = RadioConfig::with_sensitivity(-90.0);
        let mut cfg = ScenarioConfig::with_nodes(vec![
            NodeSpec::coordinator(Position::new(0.0, 0.0, 1), radio),
            NodeSpec::router(NodeId(1), pb, radio),
        ]);
        cfg.obstacles = obstacles;
        cfg
    }

    #[test]
    fn floor_difference_adds_crossing() {
        let cfg = path_cfg(Position::new(3.0, 0.0, 2), vec![]);
        assert_eq!(
            obstacles_on_path(&cfg, NodeId(0), NodeId(1)).unwrap(),
            vec![PathObstruction::FloorCrossing]
        );
    }

    #[test]
    fn collinear_disjoint_obstacle_is_ignored() {
        let wall = Obstacle::new(
            ObstacleKind::BrickWall,
            Position::new(5.0, 0.0, 1),
            Position::new(8.0, 0.0, 1),
        );
        let cfg = path_cfg(Position::new(3.0, 0.0, 1), vec![wall]);
        assert!(obstacles_on_path(&cfg, NodeId(0), NodeId(1)).unwrap().is_empty());
    }

    #[test]
    fn endpoint_touch_does_not_count() {
        let wall = Obstacle::new(
            ObstacleKind::BrickWall,
            Position::new(2.0, 0.0, 1),
            Position::new(2.0, 5.0, 1),
        );
        let cfg = path_cfg(Position::new(4.0, 0.0, 1), vec![wall]);
        assert!(obstacles_on_path(&cfg, NodeId(0), NodeId(1)).unwrap().is_empty());
    }

    #[test]
    fn two_brick_walls_in_path_order() {
        let walls = vec![
            Obstacle::new(
                ObstacleKind::BrickWall,
                Position::new(8.0, -5.0, 1),
                Position::new(8.0, 5.0, 1),
            ),
            Obstacle::new(
                ObstacleKind::WallClosedDoor,
                Position::new(20.0, -5.0, 1),
                Position::new(20.0, 5.0, 1),
            ),
            Obstacle::new(
                ObstacleKind::BrickWall,
                Position::new(4.0, -5.0, 1),
                Position::new(4.0, 5.0, 1),
            ),
        ];
        let cfg = path_cfg(Position::new(11.0, 0.0, 1), walls);
        let brick = PathObstruction::Obstacle {
            kind: ObstacleKind::BrickWall,
            attenuation_db: 1.46,
        };
        assert_eq!(
            obstacles_on_path(&cfg, NodeId(0), NodeId(1)).unwrap(),
            vec![brick, brick]
        );
        assert!(matches!(
            obstacles_on_path(&cfg, NodeId(0), NodeId(9)),
            Err(ModelError::UnknownNode(NodeId(9)))
        ));
        assert!(matches!(
            obstacles_on_path(&cfg, NodeId(1), NodeId(1)),
            Err(ModelError::SameNode(_))
        ));
    }
}
