//! Binary trace log and report reconstruction.
//!
//! ```text
//! "RTRC" u16:version u64:seed f64:dt u32:n scenario[n]
//! { u32:len record[len] }*
//! u32:0xFFFFFFFF u64:record_count
//! ```
//!
//! All integers and floats big-endian. Events inside a record are JSON.

use crate::autonomy::{FsmState, MissionStatus};
use crate::environment::{load_scenario, Scenario, ScenarioError};
use crate::event::{Event, TimedEvent};
use crate::geom::Pose;
use crate::metrics::{mission_report, MetricsError, MissionReport, ReportInputs};
use crate::rover::{ControlCommand, Mode};

pub const TRACE_MAGIC: [u8; 4] = *b"RTRC";
pub const TRACE_VERSION: u16 = 1;
const TRAILER: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub seed: u64,
    pub dt_s: f64,
    /// Canonical text of the scenario that was run.
    pub scenario: String,
}

/// State after one tick, plus what was commanded and what happened.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub tick: u64,
    pub clock_s: f64,
    pub pose: Pose,
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub battery_mah: f64,
    pub reservoir_ml: f64,
    pub mode: Mode,
    pub fsm_state: FsmState,
    pub command: ControlCommand,
    pub events: Vec<TimedEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("not a trace file: {0}")]
    BadHeader(String),
    #[error("trace truncated at record {record}")]
    Truncated { record: usize },
    #[error("record {record} is corrupt: {reason}")]
    Corrupt { record: usize, reason: String },
    #[error("trace scenario does not load: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("trace has no records")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl TraceLog {
    pub fn new(header: TraceHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(TRACE_MAGIC);
        out.extend(TRACE_VERSION.to_be_bytes());
        out.extend(self.header.seed.to_be_bytes());
        out.extend(self.header.dt_s.to_be_bytes());
        let text = self.header.scenario.as_bytes();
        out.extend((text.len() as u32).to_be_bytes());
        out.extend(text);
        for r in &self.records {
            let body = encode_record(r);
            out.extend((body.len() as u32).to_be_bytes());
            out.extend(body);
        }
        out.extend(TRAILER.to_be_bytes());
        out.extend((self.records.len() as u64).to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        let mut r = Cursor { buf: bytes, pos: 0 };
        let bad = |what: &str| TraceError::BadHeader(what.to_string());
        if r.take(4).ok_or_else(|| bad("too short"))? != TRACE_MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = r.u16().ok_or_else(|| bad("too short"))?;
        if version != TRACE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let seed = r.u64().ok_or_else(|| bad("too short"))?;
        let dt_s = r.f64().ok_or_else(|| bad("too short"))?;
        let n = r.u32().ok_or_else(|| bad("too short"))? as usize;
        let text = r.take(n).ok_or_else(|| bad("scenario text truncated"))?;
        let scenario = String::from_utf8(text.to_vec()).map_err(|_| bad("scenario is not UTF-8"))?;
        let header = TraceHeader {
            seed,
            dt_s,
            scenario,
        };

        let mut records = Vec::new();
        loop {
            let index = records.len();
            let len = r.u32().ok_or(TraceError::Truncated { record: index })?;
            if len == TRAILER {
                let count = r.u64().ok_or(TraceError::Truncated { record: index })?;
                if count as usize != index {
                    return Err(TraceError::Truncated { record: index });
                }
                if r.pos != bytes.len() {
                    return Err(TraceError::Corrupt {
                        record: index,
                        reason: "bytes after trailer".into(),
                    });
                }
                break;
            }
            let body = r
                .take(len as usize)
                .ok_or(TraceError::Truncated { record: index })?;
            let rec = decode_record(body).map_err(|reason| TraceError::Corrupt {
                record: index,
                reason,
            })?;
            records.push(rec);
        }
        Ok(Self { header, records })
    }
}

fn encode_record(r: &TraceRecord) -> Vec<u8> {
    let mut b = Vec::with_capacity(128);
    b.extend(r.tick.to_be_bytes());
    for v in [
        r.clock_s,
        r.pose.position.x,
        r.pose.position.y,
        r.pose.heading,
        r.linear_velocity,
        r.angular_velocity,
        r.battery_mah,
        r.reservoir_ml,
    ] {
        b.extend(v.to_be_bytes());
    }
    b.push(r.mode.code());
    b.push(r.fsm_state.code());
    b.extend(r.command.linear.to_be_bytes());
    b.extend(r.command.angular.to_be_bytes());
    b.push(u8::from(r.command.spray_trigger));
    b.extend((r.events.len() as u16).to_be_bytes());
    for e in &r.events {
        let json = serde_json::to_vec(e).expect("events serialize");
        b.extend((json.len() as u32).to_be_bytes());
        b.extend(json);
    }
    b
}

fn decode_record(body: &[u8]) -> Result<TraceRecord, String> {
    let mut c = Cursor { buf: body, pos: 0 };
    let short = || "record body too short".to_string();
    let tick = c.u64().ok_or_else(short)?;
    let mut f = [0.0; 8];
    for v in &mut f {
        *v = c.f64().ok_or_else(short)?;
    }
    let mode = Mode::from_code(c.u8().ok_or_else(short)?).ok_or("bad mode code")?;
    let fsm_state = FsmState::from_code(c.u8().ok_or_else(short)?).ok_or("bad fsm code")?;
    let linear = c.f64().ok_or_else(short)?;
    let angular = c.f64().ok_or_else(short)?;
    let spray = match c.u8().ok_or_else(short)? {
        0 => false,
        1 => true,
        _ => return Err("bad spray flag".into()),
    };
    let n = c.u16().ok_or_else(short)?;
    let mut events = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let len = c.u32().ok_or_else(short)? as usize;
        let json = c.take(len).ok_or_else(short)?;
        events.push(serde_json::from_slice(json).map_err(|e| format!("event: {e}"))?);
    }
    if c.pos != body.len() {
        return Err("trailing bytes in record".into());
    }
    Ok(TraceRecord {
        tick,
        clock_s: f[0],
        pose: Pose {
            position: crate::geom::Vec2::new(f[1], f[2]),
            heading: f[3],
        },
        linear_velocity: f[4],
        angular_velocity: f[5],
        battery_mah: f[6],
        reservoir_ml: f[7],
        mode,
        fsm_state,
        command: ControlCommand::new(linear, angular, spray),
        events,
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn arr<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N).map(|s| s.try_into().expect("length N"))
    }

    fn u8(&mut self) -> Option<u8> {
        self.arr::<1>().map(|a| a[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.arr().map(u16::from_be_bytes)
    }

    fn u32(&mut self) -> Option<u32> {
        self.arr().map(u32::from_be_bytes)
    }

    fn u64(&mut self) -> Option<u64> {
        self.arr().map(u64::from_be_bytes)
    }

    fn f64(&mut self) -> Option<f64> {
        self.arr().map(f64::from_be_bytes)
    }
}

/// Rebuilds the mission report from a trace alone.
pub fn replay(trace: &TraceLog) -> Result<MissionReport, TraceError> {
    let scenario: Scenario = load_scenario(&trace.header.scenario)?;
    let last = trace.records.last().ok_or(TraceError::Empty)?;
    let mut world = scenario.world.clone();
    let mut status = MissionStatus::new(0.0);
    let mut waypoint_count = scenario.mission.waypoints.len();
    let mut events = Vec::new();
    let mut poses = Vec::with_capacity(trace.records.len());
    for rec in &trace.records {
        poses.push(rec.pose);
        for te in &rec.events {
            match &te.event {
                Event::NodeReached { node } => status.nodes_reached.push(*node),
                Event::NodeSkipped { node, .. } => status.nodes_skipped.push(*node),
                Event::SprayApplied { treated, .. } => {
                    for id in treated {
                        if let Some(site) = world.site_mut(*id) {
                            site.active = false;
                        }
                        status.sites_treated.insert(*id);
                    }
                }
                Event::MissionUploaded {
                    waypoints,
                    accepted: true,
                } => {
                    waypoint_count = waypoints.len();
                    status.nodes_reached.clear();
                    status.nodes_skipped.clear();
                }
                Event::FsmChanged { to, .. } if to.is_terminal() => {
                    status.end_clock_s = Some(te.clock_s);
                }
                _ => {}
            }
            events.push(te.clone());
        }
    }
    status.fsm_state = last.fsm_state;
    Ok(mission_report(ReportInputs {
        status: &status,
        world: &world,
        waypoint_count,
        battery_capacity_mah: scenario.rover.battery_capacity_mah,
        final_battery_mah: last.battery_mah,
        events: &events,
        poses: &poses,
        camera_fov: scenario.detector.fov,
        camera_range: scenario.detector.range,
        spray_range: scenario.rover.spray_range_m,
        ledger: Some(&scenario.ledger),
    })?)
}
