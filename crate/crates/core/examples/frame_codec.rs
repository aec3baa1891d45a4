//! Encoding and decoding protocol frames, and what the decoder rejects.

use pathosim::engine::SimTime;
use pathosim::model::NodeId;
use pathosim::protocol::{decode_frame, encode_frame, ErrorCode, MessageFrame, MessageKind, SamplePayload};
use pathosim::sensors::SensorKind;

fn hex(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| format!("{b:02X}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let coord = NodeId::COORDINATOR;
    let ed = NodeId(3);
    let frames = [
        MessageFrame::new(MessageKind::Awake, ed, coord, 1),
        MessageFrame::new(MessageKind::SampleReq, coord, ed, 7),
        MessageFrame::sample_resp(
            ed,
            coord,
            2,
            SamplePayload {
                sensor: SensorKind::TemperatureCatheter,
                value: 36.75,
                sampled_at: SimTime::from_millis(901_000),
            },
        ),
        MessageFrame::set_period(coord, ed, 8, 600),
        MessageFrame::error(ed, coord, 3, ErrorCode::GaugeNotHeated),
    ];
    for f in &frames {
        let bytes = encode_frame(f)?;
        assert_eq!(&decode_frame(&bytes)?, f);
        println!("{:<11} {}", f.kind.name(), hex(&bytes));
    }

    let mut corrupt = encode_frame(&frames[0])?;
    corrupt[4] ^= 0x01;
    println!("\nflipped bit: {}", decode_frame(&corrupt).unwrap_err());
    let good = encode_frame(&frames[2])?;
    println!("five bytes:  {}", decode_frame(&good[..5]).unwrap_err());
    Ok(())
}
