//! Wire format.
//!
//! ```text
//! 0      2    3     4        8        10           10+n      14+n
//! +------+----+-----+--------+--------+------------+---------+
//! | 4D51 | 01 | typ | seq BE | len BE | payload[n] | CRC32BE |
//! +------+----+-----+--------+--------+------------+---------+
//! ```
//!
//! The CRC is CRC-32/IEEE over every byte before it. Multi-byte integers and
//! binary32 floats in payloads are big-endian.

use serde::{Deserialize, Serialize};

use crate::autonomy::FsmState;
use crate::rover::Mode;

pub const MAGIC: [u8; 2] = [0x4D, 0x51];
pub const VERSION: u8 = 1;
pub const MAX_PAYLOAD: usize = 1024;
pub const HEADER_LEN: usize = 10;
pub const CRC_LEN: usize = 4;
pub const MAX_FRAME: usize = HEADER_LEN + MAX_PAYLOAD + CRC_LEN;

pub mod msg_type {
    pub const HEARTBEAT: u8 = 0x01;
    pub const TELEMETRY: u8 = 0x02;
    pub const DETECTION_EVENT: u8 = 0x03;
    pub const SPRAY_EVENT: u8 = 0x04;
    pub const NODE_REACHED: u8 = 0x05;
    pub const COMMAND_MODE: u8 = 0x10;
    pub const COMMAND_MANUAL: u8 = 0x11;
    pub const MISSION_UPLOAD: u8 = 0x12;
    pub const ACK: u8 = 0x7F;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AckStatus {
    Ok,
    Rejected,
}

impl AckStatus {
    pub fn code(self) -> u8 {
        match self {
            AckStatus::Ok => 0,
            AckStatus::Rejected => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(AckStatus::Ok),
            1 => Some(AckStatus::Rejected),
            _ => None,
        }
    }
}

/// Every message in the catalog. Floats are carried at wire precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Heartbeat {
        mode: Mode,
        clock_s: f32,
    },
    Telemetry {
        x: f32,
        y: f32,
        heading: f32,
        battery_mah: f32,
        reservoir_ml: f32,
        fsm_state: FsmState,
        gps_x: f32,
        gps_y: f32,
    },
    DetectionEvent {
        class_id: u8,
        confidence: f32,
        bbox: [f32; 4],
        site: Option<u32>,
    },
    SprayEvent {
        sites: Vec<u32>,
        reservoir_ml: f32,
    },
    NodeReached {
        node: u32,
        clock_s: f32,
    },
    CommandMode {
        mode: Mode,
    },
    CommandManual {
        linear: f32,
        angular: f32,
        spray: bool,
    },
    MissionUpload {
        waypoints: Vec<u32>,
    },
    Ack {
        acked_seq: u32,
        status: AckStatus,
    },
}

impl Message {
    pub fn type_code(&self) -> u8 {
        use msg_type::*;
        match self {
            Message::Heartbeat { .. } => HEARTBEAT,
            Message::Telemetry { .. } => TELEMETRY,
            Message::DetectionEvent { .. } => DETECTION_EVENT,
            Message::SprayEvent { .. } => SPRAY_EVENT,
            Message::NodeReached { .. } => NODE_REACHED,
            Message::CommandMode { .. } => COMMAND_MODE,
            Message::CommandManual { .. } => COMMAND_MANUAL,
            Message::MissionUpload { .. } => MISSION_UPLOAD,
            Message::Ack { .. } => ACK,
        }
    }

    /// Ground-to-rover commands.
    pub fn is_command(&self) -> bool {
        matches!(
            self,
            Message::CommandMode { .. } | Message::CommandManual { .. } | Message::MissionUpload { .. }
        )
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(32);
        match self {
            Message::Heartbeat { mode, clock_s } => {
                w.push(mode.code());
                w.extend(clock_s.to_be_bytes());
            }
            Message::Telemetry {
                x,
                y,
                heading,
                battery_mah,
                reservoir_ml,
                fsm_state,
                gps_x,
                gps_y,
            } => {
                for v in [x, y, heading, battery_mah, reservoir_ml] {
                    w.extend(v.to_be_bytes());
                }
                w.push(fsm_state.code());
                w.extend(gps_x.to_be_bytes());
                w.extend(gps_y.to_be_bytes());
            }
            Message::DetectionEvent {
                class_id,
                confidence,
                bbox,
                site,
            } => {
                w.push(*class_id);
                w.extend(confidence.to_be_bytes());
                for v in bbox {
                    w.extend(v.to_be_bytes());
                }
                w.push(u8::from(site.is_some()));
                w.extend(site.unwrap_or(0).to_be_bytes());
            }
            Message::SprayEvent {
                sites,
                reservoir_ml,
            } => {
                put_ids(&mut w, sites);
                w.extend(reservoir_ml.to_be_bytes());
            }
            Message::NodeReached { node, clock_s } => {
                w.extend(node.to_be_bytes());
                w.extend(clock_s.to_be_bytes());
            }
            Message::CommandMode { mode } => w.push(mode.code()),
            Message::CommandManual {
                linear,
                angular,
                spray,
            } => {
                w.extend(linear.to_be_bytes());
                w.extend(angular.to_be_bytes());
                w.push(u8::from(*spray));
            }
            Message::MissionUpload { waypoints } => put_ids(&mut w, waypoints),
            Message::Ack { acked_seq, status } => {
                w.extend(acked_seq.to_be_bytes());
                w.push(status.code());
            }
        }
        w
    }

    pub fn from_payload(kind: u8, payload: &[u8]) -> Result<Message, DecodeError> {
        use msg_type::*;
        let mut r = Reader { buf: payload, pos: 0 };
        let msg = match kind {
            HEARTBEAT => Message::Heartbeat {
                mode: r.mode()?,
                clock_s: r.f32()?,
            },
            TELEMETRY => Message::Telemetry {
                x: r.f32()?,
                y: r.f32()?,
                heading: r.f32()?,
                battery_mah: r.f32()?,
                reservoir_ml: r.f32()?,
                fsm_state: FsmState::from_code(r.u8()?).ok_or(DecodeError::BadPayload)?,
                gps_x: r.f32()?,
                gps_y: r.f32()?,
            },
            DETECTION_EVENT => {
                let class_id = r.u8()?;
                if class_id > 1 {
                    return Err(DecodeError::BadPayload);
                }
                let confidence = r.f32()?;
                let bbox = [r.f32()?, r.f32()?, r.f32()?, r.f32()?];
                let has_site = r.bool()?;
                let id = r.u32()?;
                Message::DetectionEvent {
                    class_id,
                    confidence,
                    bbox,
                    site: has_site.then_some(id),
                }
            }
            SPRAY_EVENT => Message::SprayEvent {
                sites: r.ids()?,
                reservoir_ml: r.f32()?,
            },
            NODE_REACHED => Message::NodeReached {
                node: r.u32()?,
                clock_s: r.f32()?,
            },
            COMMAND_MODE => Message::CommandMode { mode: r.mode()? },
            COMMAND_MANUAL => Message::CommandManual {
                linear: r.f32()?,
                angular: r.f32()?,
                spray: r.bool()?,
            },
            MISSION_UPLOAD => Message::MissionUpload { waypoints: r.ids()? },
            ACK => Message::Ack {
                acked_seq: r.u32()?,
                status: AckStatus::from_code(r.u8()?).ok_or(DecodeError::BadPayload)?,
            },
            other => return Err(DecodeError::UnknownType(other)),
        };
        if r.pos != payload.len() {
            return Err(DecodeError::BadPayload);
        }
        Ok(msg)
    }
}

fn put_ids(w: &mut Vec<u8>, ids: &[u32]) {
    // callers that exceed u16 hit the size limit anyway
    w.extend((ids.len().min(u16::MAX as usize) as u16).to_be_bytes());
    for id in ids {
        w.extend(id.to_be_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos.checked_add(N).ok_or(DecodeError::BadPayload)?;
        let bytes = self.buf.get(self.pos..end).ok_or(DecodeError::BadPayload)?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_be_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f32, DecodeError> {
        Ok(f32::from_be_bytes(self.take()?))
    }

    fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::BadPayload),
        }
    }

    fn mode(&mut self) -> Result<Mode, DecodeError> {
        Mode::from_code(self.u8()?).ok_or(DecodeError::BadPayload)
    }

    fn ids(&mut self) -> Result<Vec<u32>, DecodeError> {
        let n = self.u16()? as usize;
        (0..n).map(|_| self.u32()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte limit")]
    Oversize(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("BAD_MAGIC")]
    BadMagic,
    #[error("BAD_VERSION {0}")]
    BadVersion(u8),
    #[error("BAD_LENGTH")]
    BadLength,
    #[error("BAD_CRC")]
    BadCrc,
    #[error("UNKNOWN_TYPE 0x{0:02X}")]
    UnknownType(u8),
    #[error("BAD_PAYLOAD")]
    BadPayload,
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

/// Frames an arbitrary payload.
pub fn encode_raw(kind: u8, seq: u32, payload: &[u8]) -> Result<Vec<u8>, EncodeError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(EncodeError::Oversize(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend(MAGIC);
    out.push(VERSION);
    out.push(kind);
    out.extend(seq.to_be_bytes());
    out.extend((payload.len() as u16).to_be_bytes());
    out.extend(payload);
    let crc = crc32(&out);
    out.extend(crc.to_be_bytes());
    Ok(out)
}

pub fn encode(seq: u32, msg: &Message) -> Result<Vec<u8>, EncodeError> {
    encode_raw(msg.type_code(), seq, &msg.payload())
}

/// A frame whose envelope checks out.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: u8,
    pub seq: u32,
    pub payload: Vec<u8>,
}

/// Envelope checks only: magic, version, length, CRC.
pub fn decode_frame(bytes: &[u8]) -> Result<Frame, DecodeError> {
    if bytes.len() < 2 {
        return Err(DecodeError::BadLength);
    }
    if bytes[..2] != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + CRC_LEN {
        return Err(DecodeError::BadLength);
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::BadVersion(bytes[2]));
    }
    let len = u16::from_be_bytes([bytes[8], bytes[9]]) as usize;
    if len > MAX_PAYLOAD || bytes.len() != HEADER_LEN + len + CRC_LEN {
        return Err(DecodeError::BadLength);
    }
    let body = &bytes[..HEADER_LEN + len];
    let crc = u32::from_be_bytes(bytes[HEADER_LEN + len..].try_into().expect("4 bytes"));
    if crc32(body) != crc {
        return Err(DecodeError::BadCrc);
    }
    Ok(Frame {
        kind: bytes[3],
        seq: u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")),
        payload: bytes[HEADER_LEN..HEADER_LEN + len].to_vec(),
    })
}

/// Full decode to `(seq, message)`. Never panics.
pub fn decode(bytes: &[u8]) -> Result<(u32, Message), DecodeError> {
    let frame = decode_frame(bytes)?;
    let msg = Message::from_payload(frame.kind, &frame.payload)?;
    Ok((frame.seq, msg))
}

/// Per-sender sequence numbering.
#[derive(Debug, Clone, Default)]
pub struct Encoder {
    next_seq: u32,
}

impl Encoder {
    pub fn starting_at(seq: u32) -> Self {
        Self { next_seq: seq }
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    /// Encodes with the next sequence number; a failed encode does not
    /// consume one.
    pub fn encode(&mut self, msg: &Message) -> Result<(u32, Vec<u8>), EncodeError> {
        let seq = self.next_seq;
        let bytes = encode(seq, msg)?;
        self.next_seq = self.next_seq.wrapping_add(1);
        Ok((seq, bytes))
    }
}
