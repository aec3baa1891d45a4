//! Wire format, per-role state machines and the static routing tree.

pub mod coordinator;
pub mod end_device;
pub mod frame;
pub mod routing;

pub use coordinator::{
    coordinator_step, CoordOutput, CoordStimulus, CoordinatorSession, RoundOutcome, SampleRecord,
    SessionParams, SessionPhase, SessionToken,
};
pub use end_device::{end_device_step, EdOutput, EdPhase, EdStimulus, EndDeviceState, SensorPort};
pub use frame::{
    decode_frame, encode_frame, ErrorCode, FrameError, MessageFrame, MessageKind, SamplePayload,
};
pub use routing::{build_parent_table, ParentEntry, ParentTable, ParkedFrame, BUFFER_CAPACITY};
