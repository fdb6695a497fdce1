//! Mission state machine: waypoint sequencing, path following, reactive
//! avoidance, detection-triggered treatment, return-to-home, and manual
//! override arbitration.
//!
//! `navigate_tick` is a pure function of its inputs; all controller memory
//! lives in [`MissionStatus`].

pub mod planner;
pub mod pursuit;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detection::{Detection, DetectorProfile, ObjectClass, SyntheticFrame};
use crate::environment::{NodeId, SiteId, WorldMap};
use crate::event::Event;
use crate::geom::{wrap_angle, Pose, Vec2};
use crate::metrics::match_detections;
use crate::rover::{ControlCommand, Mode, RoverParams, RoverState, UltrasonicReading};

pub use planner::{path_length, plan_route, PlanError, Planner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub waypoints: Vec<NodeId>,
    pub home: Vec2,
    pub treat_on_detect: bool,
    pub detect_confidence_threshold: f64,
    pub home_radius: f64,
}

impl Default for Mission {
    fn default() -> Self {
        Self {
            waypoints: Vec::new(),
            home: Vec2::ZERO,
            treat_on_detect: true,
            detect_confidence_threshold: 0.5,
            home_radius: 0.5,
        }
    }
}

impl Mission {
    pub fn validate(&self, world: &WorldMap) -> Result<(), String> {
        for id in &self.waypoints {
            if world.node(*id).is_none() {
                return Err(format!("waypoint references unknown node {id}"));
            }
        }
        if !(0.0..=1.0).contains(&self.detect_confidence_threshold) {
            return Err("mission confidence must be in [0,1]".into());
        }
        if !(self.home_radius > 0.0) {
            return Err("mission home_radius must be > 0".into());
        }
        Ok(())
    }
}

/// Controller tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutonomyConfig {
    pub cruise_speed: f64,
    pub lookahead: f64,
    pub avoid_threshold: f64,
    /// Bearings within this half-angle count as forward for avoidance.
    pub forward_cone: f64,
    pub inflation: f64,
    pub debounce_ticks: u32,
    pub deadman_s: f64,
    pub inspect_timeout_s: f64,
    pub treat_timeout_s: f64,
    pub engage_cooldown_s: f64,
    /// Added to twice the nominal leg time before a leg is abandoned.
    pub leg_slack_s: f64,
}

impl Default for AutonomyConfig {
    fn default() -> Self {
        Self {
            cruise_speed: 0.5,
            lookahead: 0.5,
            avoid_threshold: 0.5,
            forward_cone: 0.3,
            inflation: 0.5,
            debounce_ticks: 3,
            deadman_s: 1.0,
            inspect_timeout_s: 5.0,
            treat_timeout_s: 30.0,
            engage_cooldown_s: 15.0,
            leg_slack_s: 30.0,
        }
    }
}

impl AutonomyConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("cruise", self.cruise_speed),
            ("lookahead", self.lookahead),
            ("avoid", self.avoid_threshold),
            ("forward_cone", self.forward_cone),
            ("deadman", self.deadman_s),
            ("inspect_timeout", self.inspect_timeout_s),
            ("treat_timeout", self.treat_timeout_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("mission {name} must be > 0"));
            }
        }
        if !(self.inflation >= 0.0) || !(self.engage_cooldown_s >= 0.0) || !(self.leg_slack_s >= 0.0) {
            return Err("mission inflation, cooldown and slack must be >= 0".into());
        }
        if self.debounce_ticks == 0 {
            return Err("mission debounce must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FsmState {
    Idle,
    Navigate,
    Inspect,
    Treat,
    Rtl,
    Done,
    Fault,
}

impl FsmState {
    pub fn code(self) -> u8 {
        match self {
            FsmState::Idle => 0,
            FsmState::Navigate => 1,
            FsmState::Inspect => 2,
            FsmState::Treat => 3,
            FsmState::Rtl => 4,
            FsmState::Done => 5,
            FsmState::Fault => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => FsmState::Idle,
            1 => FsmState::Navigate,
            2 => FsmState::Inspect,
            3 => FsmState::Treat,
            4 => FsmState::Rtl,
            5 => FsmState::Done,
            6 => FsmState::Fault,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            FsmState::Idle => "IDLE",
            FsmState::Navigate => "NAVIGATE",
            FsmState::Inspect => "INSPECT",
            FsmState::Treat => "TREAT",
            FsmState::Rtl => "RTL",
            FsmState::Done => "DONE",
            FsmState::Fault => "FAULT",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, FsmState::Done | FsmState::Fault)
    }
}

/// A site the rover is inspecting or treating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Engagement {
    pub site: SiteId,
    pub streak: u32,
    pub since_s: f64,
    pub bearing: f64,
    pub last_spray_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionStatus {
    pub fsm_state: FsmState,
    pub current_waypoint_index: usize,
    /// In the order reached.
    pub nodes_reached: Vec<NodeId>,
    pub nodes_skipped: Vec<NodeId>,
    pub sites_treated: BTreeSet<SiteId>,
    pub sites_sighted: BTreeSet<SiteId>,
    pub start_clock_s: f64,
    pub end_clock_s: Option<f64>,
    pub path: Vec<Vec2>,
    pub path_cursor: usize,
    pub leg_deadline_s: Option<f64>,
    pub engagement: Option<Engagement>,
    /// Sites not to be re-engaged before the given clock.
    pub cooldown: BTreeMap<SiteId, f64>,
}

impl MissionStatus {
    pub fn new(start_clock_s: f64) -> Self {
        Self {
            fsm_state: FsmState::Idle,
            current_waypoint_index: 0,
            nodes_reached: Vec::new(),
            nodes_skipped: Vec::new(),
            sites_treated: BTreeSet::new(),
            sites_sighted: BTreeSet::new(),
            start_clock_s,
            end_clock_s: None,
            path: Vec::new(),
            path_cursor: 0,
            leg_deadline_s: None,
            engagement: None,
            cooldown: BTreeMap::new(),
        }
    }

    /// Forces a replan on the next tick (after manual driving, a mission
    /// upload, or a finished treatment).
    pub fn invalidate_path(&mut self) {
        self.path.clear();
        self.path_cursor = 0;
        self.leg_deadline_s = None;
    }

    pub fn finish(&mut self, state: FsmState, clock: f64) {
        self.fsm_state = state;
        self.end_clock_s = Some(clock);
        self.engagement = None;
        self.invalidate_path();
    }
}

/// A detection, with the site it was resolved to when it overlaps a
/// projected site box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sighting {
    pub detection: Detection,
    pub site: Option<SiteId>,
}

/// Associates detections with the sites behind the frame's ground-truth
/// boxes (IoU ≥ 0.5, greedy by confidence).
pub fn resolve_sightings(frame: &SyntheticFrame) -> Vec<Sighting> {
    let m = match_detections(&frame.detections, &frame.ground_truth, 0.5);
    frame
        .detections
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let site = if m.detection_tp[i] {
                best_site(d, frame)
            } else {
                None
            };
            Sighting { detection: *d, site }
        })
        .collect()
}

fn best_site(d: &Detection, frame: &SyntheticFrame) -> Option<SiteId> {
    frame
        .ground_truth
        .iter()
        .filter(|g| g.class == d.class)
        .map(|g| (crate::detection::iou(&d.bbox, &g.bbox), g.site))
        .filter(|(o, _)| *o >= 0.5)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .and_then(|(_, s)| s)
}

/// Everything the controller reads but never changes.
#[derive(Debug, Clone, Copy)]
pub struct AutonomyContext<'a> {
    pub world: &'a WorldMap,
    pub mission: &'a Mission,
    pub config: &'a AutonomyConfig,
    pub params: &'a RoverParams,
    pub profile: &'a DetectorProfile,
}

/// Sensor view for one tick.
#[derive(Debug, Clone, Copy)]
pub struct Perception<'a> {
    pub gps: Vec2,
    pub ultrasonic: &'a [UltrasonicReading],
    pub sightings: &'a [Sighting],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickDecision {
    pub command: ControlCommand,
    pub status: MissionStatus,
    pub events: Vec<Event>,
}

/// One controller step for AUTO/RTL operation.
pub fn navigate_tick(
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    status: &MissionStatus,
    perception: &Perception<'_>,
) -> TickDecision {
    let mut st = status.clone();
    let mut events = Vec::new();
    let now = state.clock_s;
    if state.mode == Mode::Fault {
        if st.fsm_state != FsmState::Fault {
            transition(&mut st, FsmState::Fault, &mut events);
            st.finish(FsmState::Fault, now);
        }
        return TickDecision {
            command: ControlCommand::STOP,
            status: st,
            events,
        };
    }
    let pose = Pose {
        position: perception.gps,
        heading: state.pose.heading,
    };

    if st.fsm_state == FsmState::Idle {
        transition(&mut st, FsmState::Navigate, &mut events);
    }

    for s in perception.sightings {
        if let Some(site) = s.site {
            if s.detection.class == ObjectClass::BreedingSite
                && s.detection.confidence >= ctx.mission.detect_confidence_threshold
                && st.sites_sighted.insert(site)
            {
                events.push(detection_event(s));
            }
        }
    }

    let command = match st.fsm_state {
        FsmState::Navigate => navigate(&pose, state, ctx, &mut st, perception, &mut events),
        FsmState::Inspect => inspect(&pose, state, ctx, &mut st, perception, &mut events),
        FsmState::Treat => treat(&pose, state, ctx, &mut st, &mut events),
        FsmState::Rtl => return_home(&pose, state, ctx, &mut st, &mut events),
        FsmState::Idle | FsmState::Done | FsmState::Fault => ControlCommand::STOP,
    };
    let command = avoid(command, st.fsm_state, ctx, perception.ultrasonic);
    TickDecision {
        command,
        status: st,
        events,
    }
}

fn transition(st: &mut MissionStatus, to: FsmState, events: &mut Vec<Event>) {
    if st.fsm_state != to {
        events.push(Event::FsmChanged {
            from: st.fsm_state,
            to,
        });
        st.fsm_state = to;
    }
}

fn detection_event(s: &Sighting) -> Event {
    Event::Detection {
        class: s.detection.class,
        confidence: s.detection.confidence,
        bbox: s.detection.bbox,
        site: s.site,
    }
}

/// Best sighting eligible to start an engagement.
fn engage_candidate<'s>(
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    st: &MissionStatus,
    sightings: &'s [Sighting],
) -> Option<&'s Sighting> {
    if !ctx.mission.treat_on_detect || state.reservoir_ml < ctx.params.spray_dose_ml {
        return None;
    }
    sightings
        .iter()
        .filter(|s| s.detection.class == ObjectClass::BreedingSite)
        .filter(|s| s.detection.confidence >= ctx.mission.detect_confidence_threshold)
        .filter(|s| match s.site {
            Some(id) => {
                !st.sites_treated.contains(&id)
                    && ctx.world.site(id).is_some_and(|site| site.active)
                    && st.cooldown.get(&id).is_none_or(|&until| state.clock_s >= until)
            }
            None => false,
        })
        .max_by(|a, b| a.detection.confidence.total_cmp(&b.detection.confidence))
}

fn sighting_bearing(ctx: &AutonomyContext<'_>, s: &Sighting) -> f64 {
    let offset = crate::detection::center_offset(&s.detection, ctx.profile.frame_width);
    ctx.profile.bearing_from_offset(offset)
}

fn navigate(
    pose: &Pose,
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    st: &mut MissionStatus,
    perception: &Perception<'_>,
    events: &mut Vec<Event>,
) -> ControlCommand {
    let now = state.clock_s;
    loop {
        let Some(&node_id) = ctx.mission.waypoints.get(st.current_waypoint_index) else {
            transition(st, FsmState::Rtl, events);
            st.invalidate_path();
            return return_home(pose, state, ctx, st, events);
        };
        let Some(node) = ctx.world.node(node_id) else {
            skip_node(st, node_id, "unknown node", events);
            continue;
        };
        // arrival is judged on the true position; steering uses the fix
        if state.pose.position.distance(node.center) <= node.acceptance_radius {
            st.nodes_reached.push(node_id);
            st.current_waypoint_index += 1;
            st.invalidate_path();
            events.push(Event::NodeReached { node: node_id });
            continue;
        }
        if st.leg_deadline_s.is_some_and(|d| now > d) {
            skip_node(st, node_id, "leg timed out", events);
            continue;
        }
        if st.path.is_empty() {
            let planner = Planner::new(ctx.world, ctx.config.inflation);
            match planner.plan_leg(pose.position, node.center) {
                Some(path) => start_leg(st, path, now, ctx.config),
                None => {
                    skip_node(st, node_id, "unreachable", events);
                    continue;
                }
            }
        }
        break;
    }

    if let Some(s) = engage_candidate(state, ctx, st, perception.sightings) {
        let site = s.site.expect("candidate is resolved");
        let bearing = sighting_bearing(ctx, s);
        st.engagement = Some(Engagement {
            site,
            streak: 1,
            since_s: now,
            bearing,
            last_spray_s: None,
        });
        transition(st, FsmState::Inspect, events);
        if ctx.config.debounce_ticks <= 1 {
            transition(st, FsmState::Treat, events);
        }
        return ControlCommand::new(0.0, face(bearing, ctx.params), false);
    }

    follow_path(pose, ctx, st)
}

fn start_leg(st: &mut MissionStatus, path: Vec<Vec2>, now: f64, cfg: &AutonomyConfig) {
    let nominal = path_length(&path) / cfg.cruise_speed;
    st.path = path;
    st.path_cursor = 0;
    st.leg_deadline_s = Some(now + 2.0 * nominal + cfg.leg_slack_s);
}

fn skip_node(st: &mut MissionStatus, node: NodeId, reason: &str, events: &mut Vec<Event>) {
    st.nodes_skipped.push(node);
    st.current_waypoint_index += 1;
    st.invalidate_path();
    events.push(Event::NodeSkipped {
        node,
        reason: reason.to_string(),
    });
}

fn follow_path(pose: &Pose, ctx: &AutonomyContext<'_>, st: &mut MissionStatus) -> ControlCommand {
    let target = pursuit::lookahead_point(
        &st.path,
        &mut st.path_cursor,
        pose.position,
        ctx.config.lookahead,
    );
    pursuit::pursue(pose, target, ctx.config.cruise_speed, ctx.params.max_turn_rate)
}

fn face(bearing: f64, params: &RoverParams) -> f64 {
    (2.0 * bearing).clamp(-params.max_turn_rate, params.max_turn_rate)
}

fn release(st: &mut MissionStatus, now: f64, cooldown: f64, events: &mut Vec<Event>) {
    if let Some(e) = st.engagement.take() {
        st.cooldown.insert(e.site, now + cooldown);
    }
    st.invalidate_path();
    transition(st, FsmState::Navigate, events);
}

fn inspect(
    pose: &Pose,
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    st: &mut MissionStatus,
    perception: &Perception<'_>,
    events: &mut Vec<Event>,
) -> ControlCommand {
    let now = state.clock_s;
    let Some(mut eng) = st.engagement.clone() else {
        transition(st, FsmState::Navigate, events);
        return follow_path(pose, ctx, st);
    };
    let seen = perception
        .sightings
        .iter()
        .filter(|s| s.site == Some(eng.site))
        .filter(|s| s.detection.class == ObjectClass::BreedingSite)
        .filter(|s| s.detection.confidence >= ctx.mission.detect_confidence_threshold)
        .max_by(|a, b| a.detection.confidence.total_cmp(&b.detection.confidence));
    match seen {
        Some(s) => {
            eng.streak += 1;
            eng.bearing = sighting_bearing(ctx, s);
        }
        None => eng.streak = 0,
    }
    if eng.streak >= ctx.config.debounce_ticks {
        eng.since_s = now;
        st.engagement = Some(eng);
        transition(st, FsmState::Treat, events);
        return treat(pose, state, ctx, st, events);
    }
    if now - eng.since_s > ctx.config.inspect_timeout_s {
        st.engagement = Some(eng);
        release(st, now, ctx.config.engage_cooldown_s, events);
        return ControlCommand::STOP;
    }
    let turn = if seen.is_some() {
        face(eng.bearing, ctx.params)
    } else {
        0.0
    };
    st.engagement = Some(eng);
    ControlCommand::new(0.0, turn, false)
}

fn treat(
    pose: &Pose,
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    st: &mut MissionStatus,
    events: &mut Vec<Event>,
) -> ControlCommand {
    let now = state.clock_s;
    let Some(mut eng) = st.engagement.clone() else {
        transition(st, FsmState::Navigate, events);
        return ControlCommand::STOP;
    };
    let site = ctx.world.site(eng.site);
    let done = st.sites_treated.contains(&eng.site) || site.is_none_or(|s| !s.active);
    if done {
        st.engagement = None;
        st.invalidate_path();
        transition(st, FsmState::Navigate, events);
        return ControlCommand::STOP;
    }
    if now - eng.since_s > ctx.config.treat_timeout_s
        || state.reservoir_ml < ctx.params.spray_dose_ml
    {
        release(st, now, ctx.config.engage_cooldown_s, events);
        return ControlCommand::STOP;
    }
    let center = site.expect("checked above").center;
    let to = center - pose.position;
    let dist = to.norm();
    if dist <= 0.7 * ctx.params.spray_range_m {
        let fire = eng.last_spray_s.is_none_or(|t| now - t >= 1.0);
        if fire {
            eng.last_spray_s = Some(now);
        }
        st.engagement = Some(eng);
        return ControlCommand::new(0.0, 0.0, fire);
    }
    st.engagement = Some(eng);
    let alpha = wrap_angle(to.angle() - pose.heading);
    if alpha.abs() > pursuit::TURN_IN_PLACE {
        return ControlCommand::new(0.0, ctx.params.max_turn_rate.copysign(alpha), false);
    }
    let v = ctx.config.cruise_speed.min(dist) * alpha.cos();
    ControlCommand::new(v, face(alpha, ctx.params), false)
}

fn return_home(
    pose: &Pose,
    state: &RoverState,
    ctx: &AutonomyContext<'_>,
    st: &mut MissionStatus,
    events: &mut Vec<Event>,
) -> ControlCommand {
    let now = state.clock_s;
    let home = ctx.mission.home;
    if state.pose.position.distance(home) <= ctx.mission.home_radius {
        transition(st, FsmState::Done, events);
        st.finish(FsmState::Done, now);
        return ControlCommand::STOP;
    }
    if st.leg_deadline_s.is_some_and(|d| now > d) {
        events.push(Event::Fault {
            reason: "home unreachable".into(),
        });
        transition(st, FsmState::Fault, events);
        st.finish(FsmState::Fault, now);
        return ControlCommand::STOP;
    }
    if st.path.is_empty() {
        let planner = Planner::new(ctx.world, ctx.config.inflation);
        let path = planner
            .plan_leg(pose.position, home)
            .unwrap_or_else(|| vec![pose.position, home]);
        start_leg(st, path, now, ctx.config);
    }
    follow_path(pose, ctx, st)
}

/// Reactive override: an obstacle inside the avoidance threshold on any
/// forward ranger stops forward motion and turns toward the clearer side.
pub fn avoid(
    cmd: ControlCommand,
    fsm: FsmState,
    ctx: &AutonomyContext<'_>,
    readings: &[UltrasonicReading],
) -> ControlCommand {
    if !matches!(fsm, FsmState::Navigate | FsmState::Treat | FsmState::Rtl) || cmd.linear <= 0.0 {
        return cmd;
    }
    let blocked = readings
        .iter()
        .any(|r| r.bearing.abs() <= ctx.config.forward_cone && r.distance < ctx.config.avoid_threshold);
    if !blocked {
        return cmd;
    }
    let side = |left: bool| {
        readings
            .iter()
            .filter(|r| if left { r.bearing > 0.0 } else { r.bearing < 0.0 })
            .map(|r| r.distance)
            .fold(0.0_f64, f64::max)
    };
    let turn = 0.8 * ctx.params.max_turn_rate;
    let angular = if side(true) >= side(false) { turn } else { -turn };
    ControlCommand::new(0.0, angular, cmd.spray_trigger)
}

/// Chooses between autonomy and the operator. In MANUAL the operator's
/// command wins (clamped); with no live operator command the rover stops.
pub fn arbitrate(
    auto_cmd: ControlCommand,
    manual: Option<ControlCommand>,
    mode: Mode,
    params: &RoverParams,
) -> ControlCommand {
    match (mode, manual) {
        (Mode::Manual, Some(m)) => m.clamped(params),
        (Mode::Manual, None) => ControlCommand::STOP,
        (_, Some(_)) => {
            log::debug!("manual command ignored in {} mode", mode.name());
            auto_cmd
        }
        (_, None) => auto_cmd,
    }
}

/// Holds the latest operator command until it goes stale.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManualLatch {
    latest: Option<(ControlCommand, f64)>,
}

impl ManualLatch {
    pub fn update(&mut self, cmd: ControlCommand, clock_s: f64) {
        self.latest = Some((cmd, clock_s));
    }

    pub fn clear(&mut self) {
        self.latest = None;
    }

    /// The held command while younger than `deadman_s`.
    pub fn current(&self, clock_s: f64, deadman_s: f64) -> Option<ControlCommand> {
        self.latest
            .filter(|(_, t)| clock_s - t <= deadman_s + 1e-9)
            .map(|(c, _)| c)
    }
}
