//! Mission events recorded in the trace and surfaced in reports.

use serde::{Deserialize, Serialize};

use crate::autonomy::FsmState;
use crate::detection::{BoundingBox, ObjectClass};
use crate::environment::{NodeId, SiteId};
use crate::rover::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    ModeChanged {
        from: Mode,
        to: Mode,
    },
    FsmChanged {
        from: FsmState,
        to: FsmState,
    },
    NodeReached {
        node: NodeId,
    },
    NodeSkipped {
        node: NodeId,
        reason: String,
    },
    Detection {
        class: ObjectClass,
        confidence: f64,
        bbox: BoundingBox,
        site: Option<SiteId>,
    },
    SprayApplied {
        treated: Vec<SiteId>,
        reservoir_ml: f64,
    },
    SprayRejected,
    Collision,
    MissionUploaded {
        waypoints: Vec<NodeId>,
        accepted: bool,
    },
    ManualIgnored,
    Fault {
        reason: String,
    },
}

impl Event {
    pub fn label(&self) -> &'static str {
        match self {
            Event::ModeChanged { .. } => "mode_changed",
            Event::FsmChanged { .. } => "fsm_changed",
            Event::NodeReached { .. } => "node_reached",
            Event::NodeSkipped { .. } => "node_skipped",
            Event::Detection { .. } => "detection",
            Event::SprayApplied { .. } => "spray_applied",
            Event::SprayRejected => "spray_rejected",
            Event::Collision => "collision",
            Event::MissionUploaded { .. } => "mission_uploaded",
            Event::ManualIgnored => "manual_ignored",
            Event::Fault { .. } => "fault",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub clock_s: f64,
    #[serde(flatten)]
    pub event: Event,
}
