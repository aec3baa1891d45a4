//! Whole-network discrete-event simulation.
//!
//! Every enabled node gets a power ledger and a transmit queue. End Devices
//! tick on the poll grid (`k * t_poll`); every n-th tick is an external wake
//! that starts a collection round. Frames travel hop by hop along the
//! routing tree, each hop taking one airtime. A frame for a sleeping End
//! Device waits at its parent until the child's next wake.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{EventHandle, EventQueue, RngStream, Scheduled, SimTime, TraceLine};
use crate::model::{validate_scenario, NodeId, NodeRole, NodeSpec, ScenarioConfig, Violation};
use crate::power::{accrue, Accrual, BatteryState, CyclicSleepConfig, PowerError, PowerLedger, PowerState};
use crate::propagation::link_budget;
use crate::protocol::{
    build_parent_table, coordinator_step, end_device_step, CoordOutput, CoordStimulus, CoordinatorSession,
    EdOutput, EdPhase, EdStimulus, EndDeviceState, MessageFrame, MessageKind, ParentTable, ParkedFrame,
    RoundOutcome, SamplePayload, SampleRecord, SensorPort, SessionParams, SessionToken,
};
use crate::sensors::{sample, GaugeState, SensorError, SensorModel};

const CHANNEL_STREAM: u64 = 1;
const SENSOR_STREAM_BASE: u64 = 0x1000;

// ============================================================================
// Events
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTimer {
    TxDone,
    PollDone,
    Watchdog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SetPeriod { node: NodeId, seconds: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TimerFired {
        node: NodeId,
        timer: NodeTimer,
    },
    FrameDelivered {
        node: NodeId,
        ticket: u64,
        frame: MessageFrame,
        rssi_dbm: f64,
    },
    PollWake(NodeId),
    ExternalWake(NodeId),
    WarmupDone {
        node: NodeId,
        target: NodeId,
        round: u32,
    },
    Timeout {
        node: NodeId,
        target: NodeId,
        session: SessionToken,
    },
    CommandInjected(Command),
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TimerFired {
                timer: NodeTimer::TxDone,
                ..
            } => "tx_done",
            EventKind::TimerFired {
                timer: NodeTimer::PollDone,
                ..
            } => "poll_done",
            EventKind::TimerFired {
                timer: NodeTimer::Watchdog,
                ..
            } => "watchdog",
            EventKind::FrameDelivered { .. } => "frame_delivered",
            EventKind::PollWake(_) => "poll_wake",
            EventKind::ExternalWake(_) => "external_wake",
            EventKind::WarmupDone { .. } => "warmup_done",
            EventKind::Timeout { .. } => "timeout",
            EventKind::CommandInjected(_) => "command",
        }
    }

    pub fn node(&self) -> Option<NodeId> {
        match *self {
            EventKind::TimerFired { node, .. }
            | EventKind::FrameDelivered { node, .. }
            | EventKind::PollWake(node)
            | EventKind::ExternalWake(node)
            | EventKind::WarmupDone { node, .. }
            | EventKind::Timeout { node, .. } => Some(node),
            EventKind::CommandInjected(_) => None,
        }
    }
}

// ============================================================================
// Frame bookkeeping
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    NodeDead,
    BufferFull,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::NodeDead => "node_dead",
            DropReason::BufferFull => "buffer_full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFate {
    InFlight,
    Buffered,
    Delivered(SimTime),
    Dropped(DropReason),
}

/// A frame as first emitted by its origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SentFrame {
    pub at: SimTime,
    pub ticket: u64,
    pub frame: MessageFrame,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub events_processed: u64,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub frames_parked: u64,
    pub hop_transmissions: u64,
    pub rounds_completed: u64,
    pub rounds_aborted: u64,
    pub samples_persisted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NodeCounters {
    pub external_wakes: u64,
    pub skipped_wakes: u64,
    pub poll_wakes: u64,
    pub frames_sent: u64,
    pub rounds_completed: u64,
    pub rounds_aborted: u64,
    pub samples: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario has {} violation(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Power(#[from] PowerError),
}

// ============================================================================
// Node runtime
// ============================================================================

#[derive(Debug)]
struct EdRuntime {
    state: EndDeviceState,
    cyclic: CyclicSleepConfig,
    polls_since_external: u32,
    tick: Option<(EventHandle, SimTime)>,
    poll_open: bool,
    poll_deadline: SimTime,
    /// Frames handed to the radio with this device as next hop, not yet arrived.
    inbound: u32,
    watchdog: Option<EventHandle>,
    rng: RngStream,
}

impl EdRuntime {
    fn radio_off(&self) -> bool {
        self.state.phase == EdPhase::Sleeping && !self.poll_open
    }
}

#[derive(Debug)]
struct NodeRuntime {
    spec: NodeSpec,
    ledger: PowerLedger,
    battery: Option<BatteryState>,
    base: PowerState,
    tx_queue: VecDeque<(u64, MessageFrame, NodeId)>,
    transmitting: bool,
    ed: Option<EdRuntime>,
    counters: NodeCounters,
    dead: bool,
}

struct SensorBank<'a> {
    models: &'a [SensorModel],
    rng: &'a mut RngStream,
}

impl SensorPort for SensorBank<'_> {
    fn read(&mut self, now: SimTime, gauge: &GaugeState) -> Result<Vec<SamplePayload>, SensorError> {
        self.models
            .iter()
            .map(|m| {
                Ok(SamplePayload {
                    sensor: m.kind,
                    value: sample(m, gauge, now, self.rng)?,
                    sampled_at: now,
                })
            })
            .collect()
    }
}

// ============================================================================
// Simulation
// ============================================================================

pub struct Simulation {
    cfg: ScenarioConfig,
    queue: EventQueue<EventKind>,
    parents: ParentTable,
    coordinator: NodeId,
    nodes: BTreeMap<NodeId, NodeRuntime>,
    sessions: BTreeMap<NodeId, CoordinatorSession>,
    params: SessionParams,
    watchdog_after: SimTime,
    channel_rng: RngStream,
    link_power: BTreeMap<(NodeId, NodeId), f64>,
    samples: Vec<SampleRecord>,
    sent: Vec<SentFrame>,
    fates: BTreeMap<u64, FrameFate>,
    next_ticket: u64,
    stats: RunStats,
    record_trace: bool,
    trace: Vec<TraceLine>,
    /// Side effects of the event being processed, appended to its trace line.
    notes: Vec<String>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        let violations = validate_scenario(&cfg);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }
        let parents = build_parent_table(&cfg);
        let coordinator = cfg.coordinator().map_or(NodeId::COORDINATOR, |n| n.id);
        let root = RngStream::new(cfg.seed);
        let params = SessionParams {
            coordinator,
            warmup_delay: SimTime::from_secs_f64(cfg.warmup_delay_s),
            response_timeout: SimTime::from_secs_f64(cfg.response_timeout_s),
            max_retries: cfg.max_retries,
        };
        let watchdog_after = SimTime::from_secs_f64(
            cfg.warmup_delay_s + f64::from(cfg.max_retries + 2) * cfg.response_timeout_s,
        );

        let mut nodes = BTreeMap::new();
        let mut sessions = BTreeMap::new();
        for spec in cfg.nodes.iter().filter(|n| n.enabled) {
            let ed = match spec.role {
                NodeRole::EndDevice => {
                    let period = spec.sample_period_s.unwrap_or(spec.radio.poll_period_s);
                    let heat = spec
                        .sensors
                        .iter()
                        .find(|s| s.kind.requires_heating())
                        .map(SensorModel::heat_duration);
                    sessions.insert(
                        spec.id,
                        CoordinatorSession::new(spec.id, spec.sensors.iter().map(|s| s.kind).collect()),
                    );
                    Some(EdRuntime {
                        state: EndDeviceState::new(spec.id, coordinator, period, heat),
                        cyclic: CyclicSleepConfig::new(period, spec.radio.poll_period_s)?,
                        polls_since_external: 0,
                        tick: None,
                        poll_open: false,
                        poll_deadline: SimTime::ZERO,
                        inbound: 0,
                        watchdog: None,
                        rng: root.fork(SENSOR_STREAM_BASE + u64::from(spec.id.0)),
                    })
                }
                _ => None,
            };
            let base = if ed.is_some() {
                PowerState::Sleeping
            } else {
                PowerState::AwakeIdle
            };
            nodes.insert(
                spec.id,
                NodeRuntime {
                    spec: spec.clone(),
                    ledger: PowerLedger::new(base, SimTime::ZERO),
                    battery: spec.battery,
                    base,
                    tx_queue: VecDeque::new(),
                    transmitting: false,
                    ed,
                    counters: NodeCounters::default(),
                    dead: false,
                },
            );
        }

        let mut sim = Self {
            channel_rng: root.fork(CHANNEL_STREAM),
            cfg,
            queue: EventQueue::new(),
            parents,
            coordinator,
            nodes,
            sessions,
            params,
            watchdog_after,
            link_power: BTreeMap::new(),
            samples: Vec::new(),
            sent: Vec::new(),
            fates: BTreeMap::new(),
            next_ticket: 0,
            stats: RunStats::default(),
            record_trace: false,
            trace: Vec::new(),
            notes: Vec::new(),
        };
        let eds: Vec<NodeId> = sim.sessions.keys().copied().collect();
        for id in eds {
            let t_poll = sim.poll_period(id);
            sim.schedule_tick(id, t_poll);
        }
        Ok(sim)
    }

    /// Keeps every processed event as a [`TraceLine`].
    pub fn with_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    // ------------------------------------------------------------------
    // Accessors
    // ------------------------------------------------------------------

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn parent_table(&self) -> &ParentTable {
        &self.parents
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn trace(&self) -> &[TraceLine] {
        &self.trace
    }

    pub fn sent_frames(&self) -> &[SentFrame] {
        &self.sent
    }

    pub fn fate(&self, ticket: u64) -> Option<FrameFate> {
        self.fates.get(&ticket).copied()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_spec(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.get(&id).map(|n| &n.spec)
    }

    pub fn ledger(&self, id: NodeId) -> Option<&PowerLedger> {
        self.nodes.get(&id).map(|n| &n.ledger)
    }

    pub fn battery(&self, id: NodeId) -> Option<&BatteryState> {
        self.nodes.get(&id).and_then(|n| n.battery.as_ref())
    }

    pub fn counters(&self, id: NodeId) -> Option<&NodeCounters> {
        self.nodes.get(&id).map(|n| &n.counters)
    }

    pub fn end_device(&self, id: NodeId) -> Option<&EndDeviceState> {
        self.nodes.get(&id)?.ed.as_ref().map(|e| &e.state)
    }

    pub fn cyclic(&self, id: NodeId) -> Option<&CyclicSleepConfig> {
        self.nodes.get(&id)?.ed.as_ref().map(|e| &e.cyclic)
    }

    pub fn session(&self, id: NodeId) -> Option<&CoordinatorSession> {
        self.sessions.get(&id)
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Every ledger's charge matches its duration integral.
    pub fn energy_balanced(&self) -> bool {
        self.nodes
            .values()
            .all(|n| n.ledger.is_balanced(&self.cfg.consumption))
    }

    /// Queues a command at the current clock.
    pub fn inject(&mut self, command: Command) {
        self.queue
            .schedule_in(SimTime::ZERO, EventKind::CommandInjected(command));
    }

    // ------------------------------------------------------------------
    // Driving
    // ------------------------------------------------------------------

    /// Processes the next event, if any, and returns its trace line.
    pub fn step(&mut self) -> Option<TraceLine> {
        let ev = self.queue.pop()?;
        Some(self.process(ev))
    }

    /// Processes every event due at or before `t_end`, then settles all
    /// ledgers at `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> &RunStats {
        while let Some(ev) = self.queue.pop_until(t_end) {
            self.process(ev);
        }
        self.queue.advance_to(t_end);
        self.settle();
        &self.stats
    }

    /// Brings every ledger up to the current clock.
    pub fn settle(&mut self) {
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in ids {
            self.refresh_power(id);
        }
    }

    fn process(&mut self, ev: Scheduled<EventKind>) -> TraceLine {
        self.stats.events_processed += 1;
        let node = ev.kind.node();
        let kind = ev.kind.name();
        let detail = match node {
            Some(n) if !self.refresh_power(n) => match ev.kind {
                EventKind::FrameDelivered { ticket, frame, .. } => {
                    self.drop_frame(ticket, DropReason::NodeDead);
                    format!("{frame}")
                }
                _ => "node dead".to_string(),
            },
            _ => self.dispatch(ev.kind),
        };
        let mut detail = detail;
        for note in self.notes.drain(..) {
            if !detail.is_empty() {
                detail.push_str("; ");
            }
            detail.push_str(&note);
        }
        let line = TraceLine {
            ticks: ev.at.ticks(),
            seq: ev.seq,
            kind,
            node,
            detail,
        };
        log::trace!("{line}");
        if self.record_trace {
            self.trace.push(line.clone());
        }
        line
    }

    fn dispatch(&mut self, kind: EventKind) -> String {
        match kind {
            EventKind::TimerFired { node, timer } => self.on_timer(node, timer),
            EventKind::FrameDelivered {
                node,
                ticket,
                frame,
                rssi_dbm,
            } => self.on_frame(node, ticket, frame, rssi_dbm),
            EventKind::PollWake(node) => self.on_poll_wake(node),
            EventKind::ExternalWake(node) => self.on_external_wake(node),
            EventKind::WarmupDone { target, round, .. } => {
                self.coordinator_event(target, CoordStimulus::WarmupDone { round });
                format!("target={target} round={round}")
            }
            EventKind::Timeout { target, session, .. } => {
                self.coordinator_event(target, CoordStimulus::Timeout(session));
                format!(
                    "target={target} round={} attempt={}",
                    session.round, session.attempt
                )
            }
            EventKind::CommandInjected(Command::SetPeriod { node, seconds }) => {
                let Some(session) = self.sessions.get_mut(&node) else {
                    return format!("set_period {node}: not an end device");
                };
                let f = session.request_set_period(&self.params, seconds);
                let d = format!("set_period {node} {seconds}s");
                self.emit(self.coordinator, f);
                d
            }
        }
    }

    // ------------------------------------------------------------------
    // Power
    // ------------------------------------------------------------------

    /// Charges the node up to now in its current state and switches to the
    /// state implied by its radio. Returns `false` if the node is dead.
    fn refresh_power(&mut self, id: NodeId) -> bool {
        let now = self.queue.now();
        let profile = self.cfg.consumption;
        let Some(n) = self.nodes.get_mut(&id) else {
            return false;
        };
        let target = if n.transmitting {
            PowerState::Transmitting
        } else {
            n.base
        };
        match accrue(&mut n.ledger, n.battery.as_mut(), &profile, target, now) {
            Accrual::Alive => true,
            Accrual::Died(at) => {
                if !n.dead {
                    n.dead = true;
                    self.on_death(id, at);
                }
                false
            }
        }
    }

    fn on_death(&mut self, id: NodeId, at: SimTime) {
        log::info!("node {id} battery exhausted at {at}");
        let Some(n) = self.nodes.get_mut(&id) else {
            return;
        };
        n.transmitting = false;
        let queued: Vec<u64> = n.tx_queue.drain(..).map(|(t, _, _)| t).collect();
        let mut handles = vec![];
        if let Some(ed) = n.ed.as_mut() {
            handles.extend(ed.tick.take().map(|(h, _)| h));
            handles.extend(ed.watchdog.take());
        }
        for h in handles {
            self.queue.cancel(h);
        }
        for t in queued {
            self.drop_frame(t, DropReason::NodeDead);
        }
    }

    fn set_base(&mut self, id: NodeId, base: PowerState) -> bool {
        if let Some(n) = self.nodes.get_mut(&id) {
            n.base = base;
        }
        self.refresh_power(id)
    }

    // ------------------------------------------------------------------
    // Cyclic sleep
    // ------------------------------------------------------------------

    fn poll_period(&self, id: NodeId) -> SimTime {
        let secs = self.nodes[&id]
            .ed
            .as_ref()
            .map_or(self.nodes[&id].spec.radio.poll_period_s, |e| e.cyclic.t_poll_s);
        SimTime::from_secs_f64(secs)
    }

    fn schedule_tick(&mut self, id: NodeId, at: SimTime) {
        let Some(ed) = self.nodes.get_mut(&id).and_then(|n| n.ed.as_mut()) else {
            return;
        };
        let kind = if ed.polls_since_external + 1 >= ed.cyclic.n {
            EventKind::ExternalWake(id)
        } else {
            EventKind::PollWake(id)
        };
        let handle = self
            .queue
            .schedule(at, kind)
            .expect("ticks are scheduled at or after the clock");
        ed.tick = Some((handle, at));
    }

    fn apply_period(&mut self, id: NodeId, period_s: f64) {
        let Some(ed) = self.nodes.get_mut(&id).and_then(|n| n.ed.as_mut()) else {
            return;
        };
        match CyclicSleepConfig::new(period_s, ed.cyclic.t_poll_s) {
            Ok(c) => {
                log::info!(
                    "node {id}: period {period_s}s -> n={} effective {}s",
                    c.n,
                    c.effective_period_s()
                );
                ed.cyclic = c;
            }
            Err(e) => {
                log::warn!("node {id}: rejecting period {period_s}: {e}");
                return;
            }
        }
        if let Some((h, at)) = ed.tick.take() {
            self.queue.cancel(h);
            self.schedule_tick(id, at);
        }
    }

    fn on_poll_wake(&mut self, id: NodeId) -> String {
        let now = self.queue.now();
        let t_poll = self.poll_period(id);
        let wake_for = SimTime::from_secs_f64(self.cfg.poll_wake_s);
        let n = self.nodes.get_mut(&id).expect("ticking node exists");
        n.counters.poll_wakes += 1;
        let ed = n.ed.as_mut().expect("only end devices tick");
        ed.tick = None;
        ed.polls_since_external += 1;
        let opened = ed.radio_off();
        if opened {
            ed.poll_open = true;
            ed.poll_deadline = now + wake_for;
        }
        self.schedule_tick(id, now + t_poll);
        if opened {
            self.set_base(id, PowerState::AwakeIdle);
            self.queue.schedule_in(
                wake_for,
                EventKind::TimerFired {
                    node: id,
                    timer: NodeTimer::PollDone,
                },
            );
        }
        let drained = self.drain_parked(id);
        format!("poll drained={drained}")
    }

    fn close_poll(&mut self, id: NodeId) {
        let Some(ed) = self.nodes.get_mut(&id).and_then(|n| n.ed.as_mut()) else {
            return;
        };
        if !ed.poll_open {
            return;
        }
        ed.poll_open = false;
        if ed.state.phase == EdPhase::Sleeping {
            self.set_base(id, PowerState::Sleeping);
        }
    }

    fn on_external_wake(&mut self, id: NodeId) -> String {
        let now = self.queue.now();
        let t_poll = self.poll_period(id);
        let n = self.nodes.get_mut(&id).expect("ticking node exists");
        let ed = n.ed.as_mut().expect("only end devices tick");
        ed.tick = None;
        ed.polls_since_external = 0;
        let asleep = ed.state.phase == EdPhase::Sleeping;
        if asleep {
            n.counters.external_wakes += 1;
            ed.poll_open = false;
        } else {
            n.counters.skipped_wakes += 1;
        }
        self.schedule_tick(id, now + t_poll);
        if !asleep {
            log::debug!("node {id}: external wake during a round, skipped");
            return "skipped: round in progress".to_string();
        }
        self.end_device_event(id, EdStimulus::ExternalWake);
        let drained = self.drain_parked(id);
        format!("round start drained={drained}")
    }

    fn arm_watchdog(&mut self, id: NodeId) {
        let after = self.watchdog_after;
        let Some(ed) = self.nodes.get_mut(&id).and_then(|n| n.ed.as_mut()) else {
            return;
        };
        if let Some(h) = ed.watchdog.take() {
            self.queue.cancel(h);
        }
        if ed.state.phase.is_awake() {
            ed.watchdog = Some(self.queue.schedule_in(
                after,
                EventKind::TimerFired {
                    node: id,
                    timer: NodeTimer::Watchdog,
                },
            ));
        }
    }

    fn on_timer(&mut self, id: NodeId, timer: NodeTimer) -> String {
        match timer {
            NodeTimer::TxDone => {
                if let Some(n) = self.nodes.get_mut(&id) {
                    n.transmitting = false;
                }
                self.refresh_power(id);
                self.start_tx(id);
                let inbound_done =
                    self.nodes.get(&id).and_then(|n| n.ed.as_ref()).is_some_and(|e| {
                        e.poll_open && e.inbound == 0 && self.queue.now() >= e.poll_deadline
                    });
                if inbound_done {
                    self.close_poll(id);
                }
                String::new()
            }
            NodeTimer::PollDone => {
                let idle = self
                    .nodes
                    .get(&id)
                    .and_then(|n| n.ed.as_ref())
                    .is_some_and(|e| e.inbound == 0);
                if idle {
                    self.close_poll(id);
                    String::new()
                } else {
                    "held open for inbound frames".to_string()
                }
            }
            NodeTimer::Watchdog => {
                if let Some(ed) = self.nodes.get_mut(&id).and_then(|n| n.ed.as_mut()) {
                    ed.watchdog = None;
                }
                self.end_device_event(id, EdStimulus::Watchdog);
                "no coordinator traffic, back to sleep".to_string()
            }
        }
    }

    // ------------------------------------------------------------------
    // Protocol glue
    // ------------------------------------------------------------------

    fn end_device_event(&mut self, id: NodeId, stimulus: EdStimulus<'_>) {
        let now = self.queue.now();
        let n = self.nodes.get_mut(&id).expect("end device exists");
        let ed = n.ed.as_mut().expect("end device runtime");
        let mut bank = SensorBank {
            models: &n.spec.sensors,
            rng: &mut ed.rng,
        };
        let (state, out) = end_device_step(&ed.state, stimulus, now, &mut bank);
        ed.state = state;
        self.apply_ed_output(id, out);
    }

    fn apply_ed_output(&mut self, id: NodeId, out: EdOutput) {
        if let Some(p) = out.power {
            let poll_open = self.nodes[&id].ed.as_ref().is_some_and(|e| e.poll_open);
            let base = if p == PowerState::Sleeping && poll_open {
                PowerState::AwakeIdle
            } else {
                p
            };
            if !self.set_base(id, base) {
                return;
            }
            self.arm_watchdog(id);
        }
        if let Some(p) = out.period_changed {
            self.apply_period(id, p);
        }
        for f in out.frames {
            self.emit(id, f);
        }
    }

    fn coordinator_event(&mut self, device: NodeId, stimulus: CoordStimulus<'_>) {
        let now = self.queue.now();
        let Some(session) = self.sessions.get(&device) else {
            return;
        };
        let (session, out) = coordinator_step(session, stimulus, now, &self.params);
        self.sessions.insert(device, session);
        self.apply_coord_output(device, out);
    }

    fn apply_coord_output(&mut self, device: NodeId, out: CoordOutput) {
        let coord = self.coordinator;
        for r in out.records {
            self.notes
                .push(format!("persist node={} sensor={}", r.node, r.sensor));
            self.stats.samples_persisted += 1;
            if let Some(n) = self.nodes.get_mut(&device) {
                n.counters.samples += 1;
            }
            self.samples.push(r);
        }
        if let Some((at, round)) = out.warmup_at {
            self.queue
                .schedule(
                    at,
                    EventKind::WarmupDone {
                        node: coord,
                        target: device,
                        round,
                    },
                )
                .expect("warmup is in the future");
        }
        if let Some((at, session)) = out.timeout_at {
            self.queue
                .schedule(
                    at,
                    EventKind::Timeout {
                        node: coord,
                        target: device,
                        session,
                    },
                )
                .expect("timeout is in the future");
        }
        if let Some(o) = out.outcome {
            let word = match o {
                RoundOutcome::Completed => "completed",
                RoundOutcome::Aborted => "aborted",
            };
            self.notes.push(format!("round {word} node={device}"));
            let n = self.nodes.get_mut(&device).map(|n| &mut n.counters);
            match o {
                RoundOutcome::Completed => {
                    self.stats.rounds_completed += 1;
                    if let Some(c) = n {
                        c.rounds_completed += 1;
                    }
                }
                RoundOutcome::Aborted => {
                    self.stats.rounds_aborted += 1;
                    if let Some(c) = n {
                        c.rounds_aborted += 1;
                    }
                }
            }
        }
        for f in out.frames {
            self.emit(coord, f);
        }
    }

    // ------------------------------------------------------------------
    // Delivery
    // ------------------------------------------------------------------

    fn drop_frame(&mut self, ticket: u64, reason: DropReason) {
        log::debug!("frame #{ticket} dropped: {reason:?}");
        self.notes
            .push(format!("drop ticket={ticket} reason={}", reason.name()));
        self.stats.frames_dropped += 1;
        self.fates.insert(ticket, FrameFate::Dropped(reason));
    }

    /// Originates a frame at `origin` and starts it on its way.
    fn emit(&mut self, origin: NodeId, frame: MessageFrame) {
        let ticket = self.next_ticket;
        self.next_ticket += 1;
        self.stats.frames_sent += 1;
        if let Some(n) = self.nodes.get_mut(&origin) {
            n.counters.frames_sent += 1;
        }
        self.sent.push(SentFrame {
            at: self.queue.now(),
            ticket,
            frame: frame.clone(),
        });
        match self.parents.route(origin, frame.dst) {
            Some(path) if path.len() >= 2 => self.hand_off(origin, ticket, frame, path[1]),
            _ => self.drop_frame(ticket, DropReason::NoRoute),
        }
    }

    /// Passes a frame from `from` to the adjacent `next`, parking it if
    /// `next` is a sleeping End Device.
    fn hand_off(&mut self, from: NodeId, ticket: u64, frame: MessageFrame, next: NodeId) {
        let asleep = self
            .nodes
            .get(&next)
            .and_then(|n| n.ed.as_ref())
            .is_some_and(EdRuntime::radio_off);
        if asleep {
            self.park(next, ticket, frame);
        } else {
            self.send(from, ticket, frame, next);
        }
    }

    fn park(&mut self, child: NodeId, ticket: u64, frame: MessageFrame) {
        self.stats.frames_parked += 1;
        self.fates.insert(ticket, FrameFate::Buffered);
        if let Some(evicted) = self.parents.park(child, ParkedFrame { ticket, frame }) {
            log::warn!("buffer for node {child} full, dropping {}", evicted.frame);
            self.drop_frame(evicted.ticket, DropReason::BufferFull);
        }
    }

    fn drain_parked(&mut self, child: NodeId) -> usize {
        let Some(parent) = self.parents.parent(child) else {
            return 0;
        };
        let parked = self.parents.drain(child);
        let count = parked.len();
        for p in parked {
            self.send(parent, p.ticket, p.frame, child);
        }
        count
    }

    fn send(&mut self, from: NodeId, ticket: u64, frame: MessageFrame, to: NodeId) {
        self.fates.insert(ticket, FrameFate::InFlight);
        let Some(n) = self.nodes.get_mut(&from) else {
            self.drop_frame(ticket, DropReason::NoRoute);
            return;
        };
        n.tx_queue.push_back((ticket, frame, to));
        if let Some(ed) = self.nodes.get_mut(&to).and_then(|n| n.ed.as_mut()) {
            ed.inbound += 1;
        }
        if !self.nodes[&from].transmitting {
            self.start_tx(from);
        }
    }

    fn airtime(&self, from: NodeId, frame: &MessageFrame) -> SimTime {
        match self.cfg.tx_airtime_override_s {
            Some(s) => SimTime::from_secs_f64(s),
            None => {
                let bps = f64::from(self.nodes[&from].spec.radio.bitrate_bps.max(1));
                SimTime::from_secs_f64(frame.encoded_len() as f64 * 8.0 / bps)
            }
        }
    }

    fn hop_power(&mut self, from: NodeId, to: NodeId) -> f64 {
        if let Some(&p) = self.link_power.get(&(from, to)) {
            return p;
        }
        let p = link_budget(&self.cfg, from, to).map_or(f64::NEG_INFINITY, |b| b.received_power);
        self.link_power.insert((from, to), p);
        p
    }

    fn start_tx(&mut self, from: NodeId) {
        let Some((ticket, frame, to)) = self.nodes.get_mut(&from).and_then(|n| n.tx_queue.pop_front()) else {
            return;
        };
        self.nodes.get_mut(&from).expect("sender exists").transmitting = true;
        if !self.refresh_power(from) {
            return;
        }
        let airtime = self.airtime(from, &frame);
        let sigma = self
            .nodes
            .get(&to)
            .map_or(0.0, |n| n.spec.radio.shadowing_sigma_db);
        let mean = self.hop_power(from, to);
        let rssi_dbm = self.channel_rng.normal(mean, sigma);
        self.stats.hop_transmissions += 1;
        self.queue.schedule_in(
            airtime,
            EventKind::TimerFired {
                node: from,
                timer: NodeTimer::TxDone,
            },
        );
        self.queue.schedule_in(
            airtime,
            EventKind::FrameDelivered {
                node: to,
                ticket,
                frame,
                rssi_dbm,
            },
        );
    }

    fn on_frame(&mut self, rx: NodeId, ticket: u64, frame: MessageFrame, rssi_dbm: f64) -> String {
        let mut radio_off = false;
        if let Some(ed) = self.nodes.get_mut(&rx).and_then(|n| n.ed.as_mut()) {
            ed.inbound = ed.inbound.saturating_sub(1);
            radio_off = ed.radio_off();
        }
        let detail = if radio_off {
            self.park(rx, ticket, frame.clone());
            format!("{frame} receiver asleep, parked")
        } else if frame.dst == rx {
            self.stats.frames_delivered += 1;
            self.fates.insert(ticket, FrameFate::Delivered(self.queue.now()));
            let d = format!("{frame} rssi={rssi_dbm:.2} delivered");
            self.deliver(rx, &frame, rssi_dbm);
            d
        } else {
            match self.parents.route(rx, frame.dst) {
                Some(path) if path.len() >= 2 => {
                    let d = format!("{frame} rssi={rssi_dbm:.2} forward to {}", path[1]);
                    self.hand_off(rx, ticket, frame, path[1]);
                    d
                }
                _ => {
                    self.drop_frame(ticket, DropReason::NoRoute);
                    format!("{frame}")
                }
            }
        };
        let close = self
            .nodes
            .get(&rx)
            .and_then(|n| n.ed.as_ref())
            .is_some_and(|e| e.poll_open && e.inbound == 0 && self.queue.now() >= e.poll_deadline);
        if close {
            self.close_poll(rx);
        }
        detail
    }

    fn deliver(&mut self, rx: NodeId, frame: &MessageFrame, rssi_dbm: f64) {
        let role = self.nodes[&rx].spec.role;
        match role {
            NodeRole::Coordinator => {
                self.coordinator_event(frame.src, CoordStimulus::Frame { frame, rssi_dbm });
            }
            NodeRole::EndDevice => {
                self.end_device_event(rx, EdStimulus::Frame(frame));
                self.arm_watchdog(rx);
            }
            NodeRole::Router => log::debug!("router {rx} ignores {frame}"),
        }
    }
}

/// Whether a frame kind is sent by the Coordinator.
pub fn is_coordinator_kind(kind: MessageKind) -> bool {
    matches!(
        kind,
        MessageKind::HeatGaugeReq | MessageKind::SampleReq | MessageKind::SleepReq | MessageKind::SetPeriod
    )
}
