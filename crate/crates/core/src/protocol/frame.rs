//! Byte-exact message frames.
//!
//! ```text
//! offset  size  field
//!      0     1  magic     0xA5
//!      1     1  version   0x01
//!      2     1  kind      MessageKind code
//!      3     2  src       NodeId, big-endian
//!      5     2  dst       NodeId, big-endian
//!      7     2  seq       big-endian
//!      9     n  payload   layout fixed by kind
//!    9+n     1  checksum  XOR of bytes 0..9+n
//! ```
//!
//! Payload layouts: SAMPLE_RESP is a sensor-kind byte, the reading as an
//! IEEE-754 f64 and the sampling time in ticks as a u64 (17 bytes);
//! SET_PERIOD is a u32 period in seconds; ERR is a one-byte error code;
//! everything else is empty. Multi-byte fields are big-endian.
//!
//! The checksum is verified before any other field, so a frame with any
//! single flipped bit is always rejected with [`FrameError::Checksum`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::model::NodeId;
use crate::sensors::SensorKind;

pub const MAGIC: u8 = 0xA5;
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 9;
pub const OVERHEAD: usize = HEADER_LEN + 1;
pub const MAX_PAYLOAD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Awake = 0x01,
    HeatGaugeReq = 0x02,
    SampleReq = 0x03,
    SampleResp = 0x04,
    SleepReq = 0x05,
    SetPeriod = 0x06,
    Ack = 0x07,
    Err = 0x08,
}

impl MessageKind {
    pub const ALL: [MessageKind; 8] = [
        MessageKind::Awake,
        MessageKind::HeatGaugeReq,
        MessageKind::SampleReq,
        MessageKind::SampleResp,
        MessageKind::SleepReq,
        MessageKind::SetPeriod,
        MessageKind::Ack,
        MessageKind::Err,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn payload_len(self) -> usize {
        match self {
            MessageKind::SampleResp => 17,
            MessageKind::SetPeriod => 4,
            MessageKind::Err => 1,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Awake => "AWAKE",
            MessageKind::HeatGaugeReq => "HEAT_GAUGE_REQ",
            MessageKind::SampleReq => "SAMPLE_REQ",
            MessageKind::SampleResp => "SAMPLE_RESP",
            MessageKind::SleepReq => "SLEEP_REQ",
            MessageKind::SetPeriod => "SET_PERIOD",
            MessageKind::Ack => "ACK",
            MessageKind::Err => "ERR",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reason carried by an ERR frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorCode {
    GaugeNotHeated = 0x01,
    IllegalState = 0x02,
}

impl ErrorCode {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0x01 => Some(ErrorCode::GaugeNotHeated),
            0x02 => Some(ErrorCode::IllegalState),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("{kind} expects a {expected}-byte payload, got {actual}")]
    PayloadLayoutMismatch {
        kind: MessageKind,
        expected: usize,
        actual: usize,
    },
    #[error("frame too short: {0} bytes")]
    Truncated(usize),
    #[error("checksum mismatch")]
    Checksum,
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown message kind {0:#04x}")]
    UnknownKind(u8),
}

/// Decoded SAMPLE_RESP payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePayload {
    pub sensor: SensorKind,
    pub value: f64,
    pub sampled_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageFrame {
    pub kind: MessageKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub seq: u16,
    pub payload: Vec<u8>,
}

impl MessageFrame {
    pub fn new(kind: MessageKind, src: NodeId, dst: NodeId, seq: u16) -> Self {
        Self {
            kind,
            src,
            dst,
            seq,
            payload: Vec::new(),
        }
    }

    pub fn sample_resp(src: NodeId, dst: NodeId, seq: u16, sample: SamplePayload) -> Self {
        let mut payload = Vec::with_capacity(17);
        payload.push(sample.sensor.code());
        payload.extend_from_slice(&sample.value.to_bits().to_be_bytes());
        payload.extend_from_slice(&sample.sampled_at.ticks().to_be_bytes());
        Self {
            payload,
            ..Self::new(MessageKind::SampleResp, src, dst, seq)
        }
    }

    pub fn set_period(src: NodeId, dst: NodeId, seq: u16, period_s: u32) -> Self {
        Self {
            payload: period_s.to_be_bytes().to_vec(),
            ..Self::new(MessageKind::SetPeriod, src, dst, seq)
        }
    }

    pub fn error(src: NodeId, dst: NodeId, seq: u16, code: ErrorCode) -> Self {
        Self {
            payload: vec![code as u8],
            ..Self::new(MessageKind::Err, src, dst, seq)
        }
    }

    pub fn sample(&self) -> Option<SamplePayload> {
        if self.kind != MessageKind::SampleResp || self.payload.len() != 17 {
            return None;
        }
        let p = &self.payload;
        Some(SamplePayload {
            sensor: SensorKind::from_code(p[0])?,
            value: f64::from_bits(u64::from_be_bytes(p[1..9].try_into().ok()?)),
            sampled_at: SimTime::from_ticks(u64::from_be_bytes(p[9..17].try_into().ok()?)),
        })
    }

    pub fn period_s(&self) -> Option<u32> {
        if self.kind != MessageKind::SetPeriod {
            return None;
        }
        Some(u32::from_be_bytes(self.payload.as_slice().try_into().ok()?))
    }

    pub fn error_code(&self) -> Option<ErrorCode> {
        match (self.kind, self.payload.as_slice()) {
            (MessageKind::Err, [c]) => ErrorCode::from_code(*c),
            _ => None,
        }
    }

    pub fn encoded_len(&self) -> usize {
        OVERHEAD + self.payload.len()
    }
}

impl fmt::Display for MessageFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}->{} seq={}", self.kind, self.src, self.dst, self.seq)?;
        if let Some(s) = self.sample() {
            write!(f, " {}={}", s.sensor, s.value)?;
        } else if let Some(p) = self.period_s() {
            write!(f, " period={p}")?;
        } else if let Some(e) = self.error_code() {
            write!(f, " {e:?}")?;
        }
        Ok(())
    }
}

fn xor(bytes: &[u8]) -> u8 {
    bytes.iter().fold(0, |acc, b| acc ^ b)
}

pub fn encode_frame(f: &MessageFrame) -> Result<Vec<u8>, FrameError> {
    let expected = f.kind.payload_len();
    if f.payload.len() != expected {
        return Err(FrameError::PayloadLayoutMismatch {
            kind: f.kind,
            expected,
            actual: f.payload.len(),
        });
    }
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(&[MAGIC, VERSION, f.kind.code()]);
    out.extend_from_slice(&f.src.0.to_be_bytes());
    out.extend_from_slice(&f.dst.0.to_be_bytes());
    out.extend_from_slice(&f.seq.to_be_bytes());
    out.extend_from_slice(&f.payload);
    out.push(xor(&out));
    Ok(out)
}

pub fn decode_frame(bytes: &[u8]) -> Result<MessageFrame, FrameError> {
    if bytes.len() < OVERHEAD {
        return Err(FrameError::Truncated(bytes.len()));
    }
    if xor(bytes) != 0 {
        return Err(FrameError::Checksum);
    }
    if bytes[0] != MAGIC {
        return Err(FrameError::BadMagic(bytes[0]));
    }
    if bytes[1] != VERSION {
        return Err(FrameError::BadVersion(bytes[1]));
    }
    let kind = MessageKind::from_code(bytes[2]).ok_or(FrameError::UnknownKind(bytes[2]))?;
    let payload = &bytes[HEADER_LEN..bytes.len() - 1];
    if payload.len() != kind.payload_len() {
        return Err(FrameError::PayloadLayoutMismatch {
            kind,
            expected: kind.payload_len(),
            actual: payload.len(),
        });
    }
    Ok(MessageFrame {
        kind,
        src: NodeId(u16::from_be_bytes([bytes[3], bytes[4]])),
        dst: NodeId(u16::from_be_bytes([bytes[5], bytes[6]])),
        seq: u16::from_be_bytes([bytes[7], bytes[8]]),
        payload: payload.to_vec(),
    })
}
