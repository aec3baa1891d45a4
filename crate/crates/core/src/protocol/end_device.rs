//! End Device side of the collection protocol.
//!
//! ```text
//!            ExternalWake / AWAKE
//!   Sleeping ------------------------> AwakeIdle
//!      ^                                 |   |
//!      |        HEAT_GAUGE_REQ / ACK     |   | SAMPLE_REQ
//!      |   +-----------------------------+   v
//!      |   v                              Sampling --> SAMPLE_RESP | ERR
//!      | Heating ------ SAMPLE_REQ ---------^
//!      |
//!      +---- SLEEP_REQ / ACK (from any awake phase)
//! ```
//!
//! `Sampling` is held only while the sensors are read; the step returns to
//! `AwakeIdle` (or back to `Heating` on a failed gauge read). A sleeping
//! device still hears parked frames during a poll wake: SET_PERIOD is
//! accepted and applied at once, anything else is answered with
//! ERR(IllegalState).

use serde::Serialize;

use super::frame::{ErrorCode, MessageFrame, MessageKind, SamplePayload};
use crate::engine::SimTime;
use crate::model::NodeId;
use crate::power::PowerState;
use crate::sensors::{GaugeState, SensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdPhase {
    Sleeping,
    AwakeIdle,
    Heating,
    Sampling,
}

impl EdPhase {
    pub fn is_awake(self) -> bool {
        self != EdPhase::Sleeping
    }

    pub fn name(self) -> &'static str {
        match self {
            EdPhase::Sleeping => "sleeping",
            EdPhase::AwakeIdle => "awake_idle",
            EdPhase::Heating => "heating",
            EdPhase::Sampling => "sampling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndDeviceState {
    pub id: NodeId,
    pub coordinator: NodeId,
    pub phase: EdPhase,
    pub sample_period_s: f64,
    pub pending_period_change: Option<f64>,
    pub gauge: GaugeState,
    /// Heat duration of the device's strain gauge, if it has one.
    pub heat_duration: Option<SimTime>,
    pub next_seq: u16,
}

impl EndDeviceState {
    pub fn new(
        id: NodeId,
        coordinator: NodeId,
        sample_period_s: f64,
        heat_duration: Option<SimTime>,
    ) -> Self {
        Self {
            id,
            coordinator,
            phase: EdPhase::Sleeping,
            sample_period_s,
            pending_period_change: None,
            gauge: GaugeState::default(),
            heat_duration,
            next_seq: 0,
        }
    }

    fn take_seq(&mut self) -> u16 {
        let s = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        s
    }

    fn reply(&self, kind: MessageKind, to: &MessageFrame) -> MessageFrame {
        MessageFrame::new(kind, self.id, to.src, to.seq)
    }

    fn error(&self, to: &MessageFrame, code: ErrorCode) -> MessageFrame {
        MessageFrame::error(self.id, to.src, to.seq, code)
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EdStimulus<'a> {
    ExternalWake,
    PollWake,
    /// The device gave up waiting for the Coordinator and goes back to sleep.
    Watchdog,
    Frame(&'a MessageFrame),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdOutput {
    pub frames: Vec<MessageFrame>,
    /// New base power state, if it changed.
    pub power: Option<PowerState>,
    /// Sampling period now in force, if it changed.
    pub period_changed: Option<f64>,
}

/// Access to the device's sensors at the moment of a SAMPLE_REQ.
pub trait SensorPort {
    fn read(&mut self, now: SimTime, gauge: &GaugeState) -> Result<Vec<SamplePayload>, SensorError>;
}

fn go_to_sleep(s: &mut EndDeviceState, out: &mut EdOutput) {
    s.phase = EdPhase::Sleeping;
    s.gauge.clear();
    out.power = Some(PowerState::Sleeping);
    if let Some(p) = s.pending_period_change.take() {
        s.sample_period_s = p;
        out.period_changed = Some(p);
    }
}

pub fn end_device_step(
    state: &EndDeviceState,
    stimulus: EdStimulus<'_>,
    now: SimTime,
    sensors: &mut dyn SensorPort,
) -> (EndDeviceState, EdOutput) {
    let mut s = state.clone();
    let mut out = EdOutput::default();

    match stimulus {
        EdStimulus::ExternalWake => {
            if s.phase == EdPhase::Sleeping {
                s.phase = EdPhase::AwakeIdle;
                out.power = Some(PowerState::AwakeIdle);
                let seq = s.take_seq();
                out.frames
                    .push(MessageFrame::new(MessageKind::Awake, s.id, s.coordinator, seq));
            }
        }
        EdStimulus::PollWake => {}
        EdStimulus::Watchdog => {
            if s.phase.is_awake() {
                go_to_sleep(&mut s, &mut out);
            }
        }
        EdStimulus::Frame(f) if s.phase == EdPhase::Sleeping => match f.kind {
            MessageKind::SetPeriod => {
                if let Some(p) = f.period_s() {
                    s.sample_period_s = f64::from(p);
                    s.pending_period_change = None;
                    out.period_changed = Some(f64::from(p));
                }
                out.frames.push(s.reply(MessageKind::Ack, f));
            }
            _ => out.frames.push(s.error(f, ErrorCode::IllegalState)),
        },
        EdStimulus::Frame(f) => match f.kind {
            MessageKind::HeatGaugeReq => {
                if let Some(d) = s.heat_duration {
                    s.gauge.start_heating(now, d);
                    s.phase = EdPhase::Heating;
                }
                out.frames.push(s.reply(MessageKind::Ack, f));
            }
            MessageKind::SampleReq => {
                let resume = s.phase;
                s.phase = EdPhase::Sampling;
                match sensors.read(now, &s.gauge) {
                    Ok(samples) => {
                        for sample in samples {
                            out.frames
                                .push(MessageFrame::sample_resp(s.id, f.src, f.seq, sample));
                        }
                        s.phase = EdPhase::AwakeIdle;
                    }
                    Err(SensorError::GaugeNotHeated) => {
                        out.frames.push(s.error(f, ErrorCode::GaugeNotHeated));
                        s.phase = resume;
                    }
                }
            }
            MessageKind::SleepReq => {
                out.frames.push(s.reply(MessageKind::Ack, f));
                go_to_sleep(&mut s, &mut out);
            }
            MessageKind::SetPeriod => {
                if let Some(p) = f.period_s() {
                    s.pending_period_change = Some(f64::from(p));
                }
                out.frames.push(s.reply(MessageKind::Ack, f));
            }
            _ => out.frames.push(s.error(f, ErrorCode::IllegalState)),
        },
    }
    (s, out)
}
