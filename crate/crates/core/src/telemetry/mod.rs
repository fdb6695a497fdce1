//! Ground-station link: framed binary codec, command session, an in-process
//! lossy link for testing, and the UDP/WebSocket service.

pub mod codec;
pub mod link;
pub mod service;
pub mod session;

pub use codec::{
    decode, encode, encode_raw, AckStatus, DecodeError, EncodeError, Encoder, Frame, Message,
};
pub use link::{LinkConfig, LinkStats, SimulatedLink};
pub use service::{Channel, Inbound, MirrorFrame, ServiceConfig, TelemetryService};
pub use session::{CommandSession, CommandView};

/// Ticks between TELEMETRY frames.
pub const TELEMETRY_EVERY_TICKS: u64 = 5;
/// Simulated seconds between HEARTBEAT frames.
pub const HEARTBEAT_PERIOD_S: f64 = 1.0;
pub const DEFAULT_UDP_PORT: u16 = 14550;
pub const DEFAULT_MIRROR_PORT: u16 = 8080;

/// Static map and mission sent to mirror clients when they connect.
pub fn world_greeting(world: &crate::environment::WorldMap, mission: &crate::autonomy::Mission) -> String {
    serde_json::json!({
        "type": "world",
        "world": world,
        "waypoints": mission.waypoints,
    })
    .to_string()
}
