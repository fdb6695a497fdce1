use proptest::prelude::*;

use rover_sim::autonomy::FsmState;
use rover_sim::environment::NodeId;
use rover_sim::rover::Mode;
use rover_sim::telemetry::codec::{crc32, msg_type, MAX_PAYLOAD};
use rover_sim::telemetry::{
    decode, encode, encode_raw, AckStatus, CommandSession, DecodeError, EncodeError, Encoder, LinkConfig, Message,
    MirrorFrame, SimulatedLink,
};
use rover_sim::scheduler::rng_stream;

/// Reflected CRC-32 (polynomial 0xEDB88320), one bit at a time.
fn bitwise_crc32(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= u32::from(b);
        for _ in 0..8 {
            crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
        }
    }
    !crc
}

fn golden() -> Vec<(String, u32, Vec<u8>)> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/frames.hex");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            let name = it.next().unwrap().to_string();
            let seq = it.next().unwrap().parse().unwrap();
            let bytes = it.map(|h| u8::from_str_radix(h, 16).unwrap()).collect();
            (name, seq, bytes)
        })
        .collect()
}

fn golden_message(name: &str) -> Message {
    match name {
        "heartbeat_auto_t0" => Message::Heartbeat {
            mode: Mode::Auto,
            clock_s: 0.0,
        },
        "command_manual_0.3_-0.1_spray" => Message::CommandManual {
            linear: 0.3,
            angular: -0.1,
            spray: true,
        },
        "mission_upload_1_2_8" => Message::MissionUpload {
            waypoints: vec![1, 2, 8],
        },
        "command_mode_manual" => Message::CommandMode { mode: Mode::Manual },
        other => panic!("no message for golden vector {other}"),
    }
}

#[test]
fn crc_matches_bitwise_reference() {
    assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    for len in [0usize, 1, 7, 64, 1037] {
        let data: Vec<u8> = (0..len).map(|i| (i * 31 + 7) as u8).collect();
        assert_eq!(crc32(&data), bitwise_crc32(&data));
    }
}

#[test]
fn golden_vectors() {
    let vectors = golden();
    assert_eq!(vectors.len(), 4);
    for (name, seq, bytes) in vectors {
        let msg = golden_message(&name);
        assert_eq!(encode(seq, &msg).unwrap(), bytes, "{name}");
        assert_eq!(decode(&bytes).unwrap(), (seq, msg), "{name}");
        let n = bytes.len();
        assert_eq!(u32::from_be_bytes(bytes[n - 4..].try_into().unwrap()), bitwise_crc32(&bytes[..n - 4]));
    }
}

#[test]
fn envelope_errors() {
    let good = encode(3, &Message::CommandMode { mode: Mode::Rtl }).unwrap();
    let mut flipped = good.clone();
    flipped[10] ^= 0x04;
    assert_eq!(decode(&flipped), Err(DecodeError::BadCrc));
    assert_eq!(decode(&good[..good.len() - 1]), Err(DecodeError::BadLength));
    assert_eq!(decode(&[0x4D]), Err(DecodeError::BadLength));
    let mut magic = good.clone();
    magic[0] = 0x00;
    assert_eq!(decode(&magic), Err(DecodeError::BadMagic));
    let mut version = good.clone();
    version[2] = 2;
    assert_eq!(decode(&version), Err(DecodeError::BadVersion(2)));
    let unknown = encode_raw(0x42, 1, &[]).unwrap();
    assert_eq!(decode(&unknown), Err(DecodeError::UnknownType(0x42)));
    let short = encode_raw(msg_type::COMMAND_MANUAL, 1, &[0; 3]).unwrap();
    assert_eq!(decode(&short), Err(DecodeError::BadPayload));
    assert_eq!(
        encode_raw(msg_type::HEARTBEAT, 1, &[0; 2000]),
        Err(EncodeError::Oversize(2000))
    );
    assert!(encode_raw(msg_type::HEARTBEAT, 1, &[0; MAX_PAYLOAD]).is_ok());
}

#[test]
fn every_single_bit_flip_is_caught() {
    let good = encode(
        42,
        &Message::Telemetry {
            x: 1.5,
            y: 2.5,
            heading: 0.25,
            battery_mah: 2500.0,
            reservoir_ml: 400.0,
            fsm_state: FsmState::Navigate,
            gps_x: 1.52,
            gps_y: 2.49,
        },
    )
    .unwrap();
    for bit in 0..good.len() * 8 {
        let mut b = good.clone();
        b[bit / 8] ^= 1 << (bit % 8);
        assert!(decode(&b).is_err(), "bit {bit} undetected");
    }
}

#[test]
fn mirror_json_shape() {
    let f = MirrorFrame {
        seq: 5,
        message: Message::CommandManual {
            linear: 0.25,
            angular: -0.5,
            spray: false,
        },
    };
    let v: serde_json::Value = serde_json::to_value(&f).unwrap();
    assert_eq!(v["seq"], 5);
    assert_eq!(v["type"], "command_manual");
    assert_eq!(v["linear"], 0.25);
    let back: MirrorFrame = serde_json::from_value(v).unwrap();
    assert_eq!(back, f);
    let hb: serde_json::Value = serde_json::to_value(MirrorFrame {
        seq: 1,
        message: Message::Heartbeat {
            mode: Mode::Manual,
            clock_s: 2.0,
        },
    })
    .unwrap();
    assert_eq!(hb["mode"], "MANUAL");
}

fn arb_mode() -> impl Strategy<Value = Mode> {
    prop_oneof![
        Just(Mode::Idle),
        Just(Mode::Auto),
        Just(Mode::Manual),
        Just(Mode::Rtl),
        Just(Mode::Done),
        Just(Mode::Fault)
    ]
}

fn arb_fsm() -> impl Strategy<Value = FsmState> {
    (0u8..7).prop_map(|c| FsmState::from_code(c).unwrap())
}

fn arb_message() -> impl Strategy<Value = Message> {
    let f = || any::<f32>().prop_filter("not NaN", |v| !v.is_nan());
    prop_oneof![
        (arb_mode(), f()).prop_map(|(mode, clock_s)| Message::Heartbeat { mode, clock_s }),
        (f(), f(), f(), f(), f(), arb_fsm(), f(), f()).prop_map(|(x, y, heading, battery_mah, reservoir_ml, fsm_state, gps_x, gps_y)| {
            Message::Telemetry { x, y, heading, battery_mah, reservoir_ml, fsm_state, gps_x, gps_y }
        }),
        (0u8..2, f(), [f(), f(), f(), f()], proptest::option::of(any::<u32>())).prop_map(|(class_id, confidence, bbox, site)| {
            Message::DetectionEvent { class_id, confidence, bbox, site }
        }),
        (prop::collection::vec(any::<u32>(), 0..100), f()).prop_map(|(sites, reservoir_ml)| Message::SprayEvent { sites, reservoir_ml }),
        (any::<u32>(), f()).prop_map(|(node, clock_s)| Message::NodeReached { node, clock_s }),
        arb_mode().prop_map(|mode| Message::CommandMode { mode }),
        (f(), f(), any::<bool>()).prop_map(|(linear, angular, spray)| Message::CommandManual { linear, angular, spray }),
        prop::collection::vec(any::<u32>(), 0..255).prop_map(|waypoints| Message::MissionUpload { waypoints }),
        (any::<u32>(), any::<bool>()).prop_map(|(acked_seq, ok)| Message::Ack {
            acked_seq,
            status: if ok { AckStatus::Ok } else { AckStatus::Rejected },
        }),
    ]
}

proptest! {
    #[test]
    fn round_trip(seq in any::<u32>(), msg in arb_message()) {
        let bytes = encode(seq, &msg).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), (seq, msg));
    }

    #[test]
    fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..1200)) {
        let _ = decode(&bytes);
    }

    #[test]
    fn decode_never_panics_on_framed_garbage(kind in any::<u8>(), payload in prop::collection::vec(any::<u8>(), 0..64)) {
        let bytes = encode_raw(kind, 1, &payload).unwrap();
        let _ = decode(&bytes);
    }
}

#[test]
fn session_rules() {
    let exists = |id: NodeId| id.0 <= 8;
    let manual = |l: f32| Message::CommandManual {
        linear: l,
        angular: 0.0,
        spray: false,
    };
    let mut s = CommandSession::new();
    assert_eq!(s.ingest(7, manual(0.7), exists), None);
    assert_eq!(s.ingest(7, manual(0.7), exists), None);
    assert_eq!(s.duplicates, 1);
    assert_eq!(s.ingest(5, manual(0.5), exists), None);
    assert_eq!(s.stale, 1);
    assert!((s.take().manual.unwrap().linear - 0.7).abs() < 1e-6);

    let ack = s.ingest(9, Message::MissionUpload { waypoints: vec![1, 2] }, exists);
    assert_eq!(
        ack,
        Some(Message::Ack {
            acked_seq: 9,
            status: AckStatus::Ok
        })
    );
    let ack = s.ingest(10, Message::MissionUpload { waypoints: vec![1, 99] }, exists);
    assert_eq!(
        ack,
        Some(Message::Ack {
            acked_seq: 10,
            status: AckStatus::Rejected
        })
    );
    assert_eq!(s.take().mission, Some(vec![NodeId(1), NodeId(2)]));

    let ack = s.ingest(11, Message::CommandMode { mode: Mode::Done }, exists);
    assert!(matches!(ack, Some(Message::Ack { status: AckStatus::Rejected, .. })));
    s.ingest(13, Message::CommandMode { mode: Mode::Manual }, exists);
    s.ingest(12, Message::CommandMode { mode: Mode::Auto }, exists);
    assert_eq!(s.take().mode, Some(Mode::Manual));
}

#[test]
fn encoder_numbers_frames() {
    let mut e = Encoder::starting_at(u32::MAX);
    let (a, _) = e.encode(&Message::CommandMode { mode: Mode::Auto }).unwrap();
    let (b, _) = e.encode(&Message::CommandMode { mode: Mode::Auto }).unwrap();
    assert_eq!((a, b), (u32::MAX, 0));
    let huge = Message::MissionUpload {
        waypoints: vec![1; 300],
    };
    assert!(e.encode(&huge).is_err());
    assert_eq!(e.next_seq(), 1);
}

#[test]
fn simulated_link_loses_and_reorders() {
    let mut link = SimulatedLink::new(LinkConfig::lossy(0.2), rng_stream(5, 3));
    for t in 0..5000u64 {
        link.send(t, t.to_be_bytes().to_vec());
    }
    let mut got = Vec::new();
    for t in 0..5100u64 {
        got.extend(link.deliver(t).into_iter().map(|b| u64::from_be_bytes(b.try_into().unwrap())));
    }
    let lost = 5000 - got.len();
    assert!((800..1200).contains(&lost), "lost {lost}");
    assert!(got.windows(2).any(|w| w[1] < w[0]), "no reordering observed");
    let mut sorted = got.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), got.len(), "duplicated datagrams");
}
