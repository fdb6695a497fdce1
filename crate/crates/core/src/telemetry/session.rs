//! Rover-side command intake: dedupe, ordering, acknowledgement.

use std::collections::BTreeSet;

use crate::environment::NodeId;
use crate::rover::{ControlCommand, Mode};

use super::codec::{AckStatus, Message};

/// How far behind the newest sequence number duplicates are still tracked.
const DEDUPE_WINDOW: u32 = 4096;

/// Commands collected since the last tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandView {
    pub mode: Option<Mode>,
    pub manual: Option<ControlCommand>,
    pub mission: Option<Vec<NodeId>>,
}

impl CommandView {
    pub fn is_empty(&self) -> bool {
        self.mode.is_none() && self.manual.is_none() && self.mission.is_none()
    }
}

#[derive(Debug, Clone, Default)]
pub struct CommandSession {
    seen: BTreeSet<u32>,
    newest: Option<u32>,
    last_manual: Option<u32>,
    last_mode: Option<u32>,
    pending: CommandView,
    pub duplicates: u64,
    pub stale: u64,
}

impl CommandSession {
    pub fn new() -> Self {
        Self::default()
    }

    /// Takes one decoded frame. Returns the ACK to send back, if any.
    /// `node_exists` vets mission uploads.
    pub fn ingest(
        &mut self,
        seq: u32,
        msg: Message,
        node_exists: impl Fn(NodeId) -> bool,
    ) -> Option<Message> {
        if !msg.is_command() {
            log::debug!("ignoring non-command message type 0x{:02X}", msg.type_code());
            return None;
        }
        if !self.seen.insert(seq) {
            self.duplicates += 1;
            return None;
        }
        let newest = self.newest.map_or(seq, |n| n.max(seq));
        self.newest = Some(newest);
        let floor = newest.saturating_sub(DEDUPE_WINDOW);
        self.seen = self.seen.split_off(&floor);

        match msg {
            Message::CommandManual {
                linear,
                angular,
                spray,
            } => {
                if self.last_manual.is_some_and(|last| seq < last) {
                    self.stale += 1;
                    return None;
                }
                self.last_manual = Some(seq);
                self.pending.manual = Some(ControlCommand::new(
                    f64::from(linear),
                    f64::from(angular),
                    spray,
                ));
                None
            }
            Message::CommandMode { mode } => {
                let ok = !mode.is_terminal() && self.last_mode.is_none_or(|last| seq > last);
                if ok {
                    self.last_mode = Some(seq);
                    self.pending.mode = Some(mode);
                }
                Some(ack(seq, ok))
            }
            Message::MissionUpload { waypoints } => {
                let ids: Vec<NodeId> = waypoints.into_iter().map(NodeId).collect();
                let ok = ids.iter().all(|id| node_exists(*id));
                if ok {
                    self.pending.mission = Some(ids);
                }
                Some(ack(seq, ok))
            }
            _ => None,
        }
    }

    /// Commands accumulated since the previous call.
    pub fn take(&mut self) -> CommandView {
        std::mem::take(&mut self.pending)
    }
}

fn ack(seq: u32, ok: bool) -> Message {
    Message::Ack {
        acked_seq: seq,
        status: if ok { AckStatus::Ok } else { AckStatus::Rejected },
    }
}
