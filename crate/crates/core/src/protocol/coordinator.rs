//! Coordinator side of the collection protocol: one session per End Device.
//!
//! A round starts when the device's AWAKE arrives. Devices with a strain
//! gauge are sent HEAT_GAUGE_REQ and the Coordinator waits out the warmup
//! delay before SAMPLE_REQ; other devices get SAMPLE_REQ at once. Each
//! SAMPLE_REQ arms a response timeout. Once every sensor has reported the
//! session sends SLEEP_REQ. After `max_retries` unanswered attempts it
//! sends SLEEP_REQ anyway and the round is aborted.

use std::collections::BTreeSet;

use serde::Serialize;

use super::frame::{MessageFrame, MessageKind};
use crate::engine::SimTime;
use crate::model::NodeId;
use crate::sensors::SensorKind;

/// A reading persisted by the Coordinator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub node: NodeId,
    pub sensor: SensorKind,
    pub value: f64,
    pub sampled_at: SimTime,
    pub received_at: SimTime,
    pub rssi_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    WaitingAwake,
    HeatRequested,
    WaitingSample,
    Done,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundOutcome {
    Completed,
    Aborted,
}

/// Identifies the attempt a timeout was armed for; stale timeouts are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionToken {
    pub round: u32,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionParams {
    pub coordinator: NodeId,
    pub warmup_delay: SimTime,
    pub response_timeout: SimTime,
    pub max_retries: u32,
}

#[derive(Debug, Clone, Copy)]
pub enum CoordStimulus<'a> {
    Frame { frame: &'a MessageFrame, rssi_dbm: f64 },
    WarmupDone { round: u32 },
    Timeout(SessionToken),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoordOutput {
    pub frames: Vec<MessageFrame>,
    pub records: Vec<SampleRecord>,
    /// Schedule a warmup-done event for this round at this time.
    pub warmup_at: Option<(SimTime, u32)>,
    /// Arm a response timeout.
    pub timeout_at: Option<(SimTime, SessionToken)>,
    pub outcome: Option<RoundOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinatorSession {
    pub device: NodeId,
    pub sensors: Vec<SensorKind>,
    pub phase: SessionPhase,
    pub round: u32,
    pub attempt: u32,
    pub retries_left: u32,
    pub collected: BTreeSet<SensorKind>,
    pub round_started_at: Option<SimTime>,
    /// SET_PERIOD sent but not yet acknowledged: (seq, seconds).
    pub pending_set_period: Option<(u16, u32)>,
    next_seq: u16,
}

impl CoordinatorSession {
    pub fn new(device: NodeId, sensors: Vec<SensorKind>) -> Self {
        Self {
            device,
            sensors,
            phase: SessionPhase::WaitingAwake,
            round: 0,
            attempt: 0,
            retries_left: 0,
            collected: BTreeSet::new(),
            round_started_at: None,
            pending_set_period: None,
            next_seq: 0,
        }
    }

    pub fn needs_heating(&self) -> bool {
        self.sensors.iter().any(|s| s.requires_heating())
    }

    pub fn is_active(&self) -> bool {
        matches!(
            self.phase,
            SessionPhase::HeatRequested | SessionPhase::WaitingSample
        )
    }

    fn take_seq(&mut self) -> u16 {
        let s = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        s
    }

    fn frame(&mut self, p: &SessionParams, kind: MessageKind) -> MessageFrame {
        let seq = self.take_seq();
        MessageFrame::new(kind, p.coordinator, self.device, seq)
    }

    /// Builds a SET_PERIOD for the device and remembers it until acknowledged.
    pub fn request_set_period(&mut self, p: &SessionParams, period_s: u32) -> MessageFrame {
        let seq = self.take_seq();
        self.pending_set_period = Some((seq, period_s));
        MessageFrame::set_period(p.coordinator, self.device, seq, period_s)
    }

    fn request_sample(&mut self, p: &SessionParams, now: SimTime, out: &mut CoordOutput) {
        self.phase = SessionPhase::WaitingSample;
        self.attempt += 1;
        let f = self.frame(p, MessageKind::SampleReq);
        out.frames.push(f);
        out.timeout_at = Some((
            now + p.response_timeout,
            SessionToken {
                round: self.round,
                attempt: self.attempt,
            },
        ));
    }

    fn finish(&mut self, p: &SessionParams, outcome: RoundOutcome, out: &mut CoordOutput) {
        let f = self.frame(p, MessageKind::SleepReq);
        out.frames.push(f);
        self.phase = match outcome {
            RoundOutcome::Completed => SessionPhase::Done,
            RoundOutcome::Aborted => SessionPhase::Aborted,
        };
        out.outcome = Some(outcome);
    }
}

pub fn coordinator_step(
    session: &CoordinatorSession,
    stimulus: CoordStimulus<'_>,
    now: SimTime,
    params: &SessionParams,
) -> (CoordinatorSession, CoordOutput) {
    let mut s = session.clone();
    let mut out = CoordOutput::default();

    match stimulus {
        CoordStimulus::Frame { frame, rssi_dbm } => match frame.kind {
            MessageKind::Awake => {
                if s.is_active() {
                    log::warn!("node {}: AWAKE during round {}, abandoning it", s.device, s.round);
                    out.outcome = Some(RoundOutcome::Aborted);
                }
                s.round += 1;
                s.attempt = 0;
                s.retries_left = params.max_retries;
                s.collected.clear();
                s.round_started_at = Some(now);
                if s.needs_heating() {
                    s.phase = SessionPhase::HeatRequested;
                    let f = s.frame(params, MessageKind::HeatGaugeReq);
                    out.frames.push(f);
                    out.warmup_at = Some((now + params.warmup_delay, s.round));
                } else {
                    s.request_sample(params, now, &mut out);
                }
            }
            MessageKind::SampleResp if s.phase == SessionPhase::WaitingSample => {
                if let Some(sample) = frame.sample() {
                    if s.collected.insert(sample.sensor) {
                        out.records.push(SampleRecord {
                            node: s.device,
                            sensor: sample.sensor,
                            value: sample.value,
                            sampled_at: sample.sampled_at,
                            received_at: now,
                            rssi_dbm,
                        });
                    }
                    if s.sensors.iter().all(|k| s.collected.contains(k)) {
                        s.finish(params, RoundOutcome::Completed, &mut out);
                    }
                }
            }
            MessageKind::Ack => {
                if matches!(s.pending_set_period, Some((seq, _)) if seq == frame.seq) {
                    s.pending_set_period = None;
                }
            }
            MessageKind::Err => {
                log::debug!("node {}: {}", s.device, frame);
            }
            _ => log::debug!("node {}: ignoring {}", s.device, frame),
        },
        CoordStimulus::WarmupDone { round } => {
            if s.phase == SessionPhase::HeatRequested && round == s.round {
                s.request_sample(params, now, &mut out);
            }
        }
        CoordStimulus::Timeout(token) => {
            let current = token.round == s.round && token.attempt == s.attempt;
            if current && s.phase == SessionPhase::WaitingSample {
                if s.retries_left > 0 {
                    s.retries_left -= 1;
                    s.request_sample(params, now, &mut out);
                } else {
                    s.finish(params, RoundOutcome::Aborted, &mut out);
                }
            }
        }
    }
    (s, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::frame::SamplePayload;

    fn params() -> SessionParams {
        SessionParams {
            coordinator: NodeId(0),
            warmup_delay: SimTime::from_secs(120),
            response_timeout: SimTime::from_secs(5),
            max_retries: 2,
        }
    }

    fn awake() -> MessageFrame {
        MessageFrame::new(MessageKind::Awake, NodeId(3), NodeId(0), 0)
    }

    fn resp(sensor: SensorKind) -> MessageFrame {
        MessageFrame::sample_resp(
            NodeId(3),
            NodeId(0),
            0,
            SamplePayload {
                sensor,
                value: 1.0,
                sampled_at: SimTime::from_secs(1),
            },
        )
    }

    fn on_frame(s: &CoordinatorSession, f: &MessageFrame, t: u64) -> (CoordinatorSession, CoordOutput) {
        coordinator_step(
            s,
            CoordStimulus::Frame {
                frame: f,
                rssi_dbm: -30.0,
            },
            SimTime::from_secs(t),
            &params(),
        )
    }

    #[test]
    fn plain_round() {
        let s = CoordinatorSession::new(NodeId(3), vec![SensorKind::TemperatureCatheter]);
        let (s, out) = on_frame(&s, &awake(), 10);
        assert_eq!(out.frames[0].kind, MessageKind::SampleReq);
        assert_eq!(out.timeout_at.unwrap().0, SimTime::from_secs(15));
        let (s, out) = on_frame(&s, &resp(SensorKind::TemperatureCatheter), 11);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].received_at, SimTime::from_secs(11));
        assert_eq!(out.frames[0].kind, MessageKind::SleepReq);
        assert_eq!(out.outcome, Some(RoundOutcome::Completed));
        assert_eq!(s.phase, SessionPhase::Done);
    }

    #[test]
    fn gauge_round_waits_for_warmup() {
        let s = CoordinatorSession::new(NodeId(3), vec![SensorKind::StrainGauge]);
        let (s, out) = on_frame(&s, &awake(), 0);
        assert_eq!(out.frames[0].kind, MessageKind::HeatGaugeReq);
        assert_eq!(out.warmup_at, Some((SimTime::from_secs(120), 1)));
        assert_eq!(out.timeout_at, None);
        let (s, out) = coordinator_step(
            &s,
            CoordStimulus::WarmupDone { round: 1 },
            SimTime::from_secs(120),
            &params(),
        );
        assert_eq!(out.frames[0].kind, MessageKind::SampleReq);
        assert_eq!(s.phase, SessionPhase::WaitingSample);
    }

    #[test]
    fn retries_then_aborts() {
        let s = CoordinatorSession::new(NodeId(3), vec![SensorKind::Displacement]);
        let (mut s, mut out) = on_frame(&s, &awake(), 0);
        let mut sample_reqs = 1;
        loop {
            let (at, token) = out.timeout_at.expect("timeout armed");
            (s, out) = coordinator_step(&s, CoordStimulus::Timeout(token), at, &params());
            match out.frames[0].kind {
                MessageKind::SampleReq => sample_reqs += 1,
                MessageKind::SleepReq => break,
                k => panic!("unexpected {k}"),
            }
        }
        assert_eq!(sample_reqs, 3);
        assert_eq!(out.outcome, Some(RoundOutcome::Aborted));
        assert_eq!(s.phase, SessionPhase::Aborted);
    }

    #[test]
    fn stale_timeout_is_ignored() {
        let s = CoordinatorSession::new(NodeId(3), vec![SensorKind::Displacement]);
        let (s, out) = on_frame(&s, &awake(), 0);
        let (_, token) = out.timeout_at.unwrap();
        let (s, _) = on_frame(&s, &resp(SensorKind::Displacement), 1);
        let (after, out) = coordinator_step(
            &s,
            CoordStimulus::Timeout(token),
            SimTime::from_secs(5),
            &params(),
        );
        assert_eq!(after, s);
        assert!(out.frames.is_empty());
    }

    #[test]
    fn duplicate_responses_persist_once() {
        let s = CoordinatorSession::new(
            NodeId(3),
            vec![SensorKind::Displacement, SensorKind::TemperatureCatheter],
        );
        let (s, _) = on_frame(&s, &awake(), 0);
        let (s, a) = on_frame(&s, &resp(SensorKind::Displacement), 1);
        let (s, b) = on_frame(&s, &resp(SensorKind::Displacement), 1);
        assert_eq!(a.records.len() + b.records.len(), 1);
        let (_, c) = on_frame(&s, &resp(SensorKind::TemperatureCatheter), 2);
        assert_eq!(c.outcome, Some(RoundOutcome::Completed));
    }

    #[test]
    fn set_period_ack_clears_pending() {
        let mut s = CoordinatorSession::new(NodeId(3), vec![]);
        let f = s.request_set_period(&params(), 3600);
        assert_eq!(s.pending_set_period, Some((f.seq, 3600)));
        let ack = MessageFrame::new(MessageKind::Ack, NodeId(3), NodeId(0), f.seq);
        let (s, _) = on_frame(&s, &ack, 1);
        assert_eq!(s.pending_set_period, None);
    }
}
