//! Fixed-step simulation loop.
//!
//! Each tick runs, in order: command intake, sensors, detection, autonomy,
//! arbitration, plant step, spray, telemetry publish and trace recording.
//! Every random draw comes from a per-subsystem ChaCha8 stream derived from
//! the run seed, so a (scenario, seed, command schedule) triple fixes every
//! output byte.

mod trace;

use std::collections::{BTreeMap, VecDeque};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autonomy::{
    arbitrate, navigate_tick, resolve_sightings, AutonomyContext, FsmState, ManualLatch, Mission,
    MissionStatus, Perception,
};
use crate::detection::synthesize_frame;
use crate::environment::{Scenario, WorldMap};
use crate::event::{Event, TimedEvent};
use crate::geom::Pose;
use crate::metrics::{mission_report, MetricsError, MissionReport, ReportInputs};
use crate::rover::{
    gps_read, spray, step, ultrasonic_scan, ControlCommand, Mode, RoverState, SprayOutcome,
};
use crate::telemetry::{
    decode, CommandSession, Encoder, Inbound, LinkConfig, LinkStats, Message, SimulatedLink,
    HEARTBEAT_PERIOD_S, TELEMETRY_EVERY_TICKS,
};

pub use trace::{replay, TraceError, TraceHeader, TraceLog, TraceRecord, TRACE_VERSION};

pub const STREAM_GPS: u64 = 1;
pub const STREAM_DETECTOR: u64 = 2;
pub const STREAM_UPLINK: u64 = 3;
pub const STREAM_DOWNLINK: u64 = 4;

/// Independent generator for one subsystem.
pub fn rng_stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

/// A ground-station message injected at a simulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledCommand {
    pub at_s: f64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Overrides the scenario's seed.
    pub seed: Option<u64>,
    pub dt_s: f64,
    pub max_sim_time_s: f64,
    /// Wall-clock pacing; 0 runs as fast as possible.
    pub realtime: f64,
    pub commands: Vec<ScheduledCommand>,
    pub uplink: LinkConfig,
    pub downlink: LinkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            dt_s: 0.1,
            max_sim_time_s: 3600.0,
            realtime: 0.0,
            commands: Vec::new(),
            uplink: LinkConfig::PERFECT,
            downlink: LinkConfig::PERFECT,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(SimError::Config("dt must be > 0".into()));
        }
        if !(self.max_sim_time_s > 0.0) {
            return Err(SimError::Config("max sim time must be > 0".into()));
        }
        if !(self.realtime >= 0.0 && self.realtime.is_finite()) {
            return Err(SimError::Config("realtime factor must be >= 0".into()));
        }
        for (name, l) in [("uplink", self.uplink), ("downlink", self.downlink)] {
            if !(0.0..=1.0).contains(&l.loss) || !(0.0..=1.0).contains(&l.reorder) {
                return Err(SimError::Config(format!("{name} probabilities must be in [0,1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Report(#[from] MetricsError),
}

/// Link-level counters for a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub frames_sent: BTreeMap<u8, u64>,
    pub frames_received_by_gcs: u64,
    pub commands_delivered: u64,
    pub commands_rejected: u64,
    pub acks: Vec<Message>,
    pub uplink: LinkStats,
    pub downlink: LinkStats,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MissionReport,
    pub trace: TraceLog,
    pub link: LinkReport,
    pub final_state: RoverState,
    pub final_status: MissionStatus,
    pub world: WorldMap,
}

pub struct Simulation {
    scenario: Scenario,
    config: RunConfig,
    world: WorldMap,
    mission: Mission,
    state: RoverState,
    status: MissionStatus,
    latch: ManualLatch,
    session: CommandSession,
    gps_rng: ChaCha8Rng,
    detector_rng: ChaCha8Rng,
    uplink: SimulatedLink,
    downlink: SimulatedLink,
    gcs_encoder: Encoder,
    rover_encoder: Encoder,
    schedule: VecDeque<ScheduledCommand>,
    tick: u64,
    next_heartbeat_s: f64,
    events: Vec<TimedEvent>,
    poses: Vec<Pose>,
    trace: TraceLog,
    link: LinkReport,
}

impl Simulation {
    pub fn new(scenario: Scenario, config: RunConfig) -> Result<Self, SimError> {
        config.validate()?;
        let seed = config.seed.or(scenario.seed).unwrap_or(0);
        let state = RoverState::at_home(&scenario.world, &scenario.rover);
        let mut schedule: Vec<ScheduledCommand> = config.commands.clone();
        schedule.sort_by(|a, b| a.at_s.total_cmp(&b.at_s));
        let trace = TraceLog::new(TraceHeader {
            seed,
            dt_s: config.dt_s,
            scenario: scenario.to_text(),
        });
        Ok(Self {
            world: scenario.world.clone(),
            mission: scenario.mission.clone(),
            status: MissionStatus::new(state.clock_s),
            latch: ManualLatch::default(),
            session: CommandSession::new(),
            gps_rng: rng_stream(seed, STREAM_GPS),
            detector_rng: rng_stream(seed, STREAM_DETECTOR),
            uplink: SimulatedLink::new(config.uplink, rng_stream(seed, STREAM_UPLINK)),
            downlink: SimulatedLink::new(config.downlink, rng_stream(seed, STREAM_DOWNLINK)),
            gcs_encoder: Encoder::default(),
            rover_encoder: Encoder::default(),
            schedule: schedule.into(),
            tick: 0,
            next_heartbeat_s: state.clock_s,
            events: Vec::new(),
            poses: Vec::new(),
            trace,
            link: LinkReport::default(),
            state,
            scenario,
            config,
        })
    }

    pub fn state(&self) -> &RoverState {
        &self.state
    }

    pub fn status(&self) -> &MissionStatus {
        &self.status
    }

    pub fn world(&self) -> &WorldMap {
        &self.world
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    pub fn is_finished(&self) -> bool {
        self.status.fsm_state.is_terminal()
    }

    /// Advances one tick. `external` carries commands from a live ground
    /// station. Returns the frames published this tick.
    pub fn step(&mut self, external: Vec<Inbound>) -> Vec<(u32, Message, Vec<u8>)> {
        let now = self.state.clock_s;
        let dt = self.config.dt_s;
        let mut events: Vec<Event> = Vec::new();
        let mut outbound: Vec<Message> = Vec::new();

        if self.tick == 0 && self.state.mode == Mode::Idle {
            self.set_mode(Mode::Auto, &mut events);
        }

        self.intake(now, external, &mut events, &mut outbound);

        // sensors
        let params = &self.scenario.rover;
        let gps = gps_read(&self.state, params.gps_sigma_m, &mut self.gps_rng);
        let ranges = ultrasonic_scan(&self.state, &self.world, params);
        let profile = &self.scenario.detector;
        let visible = self.world.sites_in_fov(&self.state.pose, profile.fov, profile.range);
        let frame = synthesize_frame(&visible, profile, &mut self.detector_rng);
        let sightings = resolve_sightings(&frame);

        // autonomy and arbitration
        let auto_cmd = if matches!(self.state.mode, Mode::Auto | Mode::Rtl) {
            let ctx = AutonomyContext {
                world: &self.world,
                mission: &self.mission,
                config: &self.scenario.autonomy,
                params,
                profile,
            };
            let decision = navigate_tick(
                &self.state,
                &ctx,
                &self.status,
                &Perception {
                    gps,
                    ultrasonic: &ranges,
                    sightings: &sightings,
                },
            );
            self.status = decision.status;
            events.extend(decision.events);
            decision.command
        } else {
            ControlCommand::STOP
        };
        let manual = self.latch.current(now, self.scenario.autonomy.deadman_s);
        let cmd = arbitrate(auto_cmd, manual, self.state.mode, params).clamped(params);

        // plant
        if !self.state.mode.is_terminal() && !self.status.fsm_state.is_terminal() {
            let was_close = self.state.proximity;
            match step(&self.state, &self.world, params, cmd, dt) {
                Ok(next) => self.state = next,
                Err(e) => log::error!("plant step refused: {e}"),
            }
            // tick-exact clock, no accumulated rounding
            self.state.clock_s = (self.tick + 1) as f64 * dt;
            if self.state.proximity && !was_close {
                events.push(Event::Collision);
            }
            if cmd.spray_trigger && self.state.mode != Mode::Fault {
                match spray(&mut self.state, &mut self.world, params, dt) {
                    SprayOutcome::Applied { treated } => {
                        self.status.sites_treated.extend(treated.iter().copied());
                        events.push(Event::SprayApplied {
                            treated,
                            reservoir_ml: self.state.reservoir_ml,
                        });
                    }
                    SprayOutcome::Rejected => events.push(Event::SprayRejected),
                }
            }
            if self.state.mode == Mode::Fault {
                self.fault(now, "battery exhausted", &mut events);
            }
        } else {
            // terminal: the clock still advances so the trace stays regular
            self.state.clock_s = (self.tick + 1) as f64 * dt;
        }

        if !self.status.fsm_state.is_terminal()
            && self.state.clock_s >= self.config.max_sim_time_s - 1e-9
        {
            self.fault(now, "max sim time reached", &mut events);
        }
        self.sync_mode(&mut events);

        self.publish(now, &events, &mut outbound, gps);
        let frames = self.encode_outbound(outbound);

        let timed: Vec<TimedEvent> = events
            .into_iter()
            .map(|event| TimedEvent { clock_s: now, event })
            .collect();
        self.events.extend(timed.iter().cloned());
        self.poses.push(self.state.pose);
        self.trace.records.push(TraceRecord {
            tick: self.tick,
            clock_s: self.state.clock_s,
            pose: self.state.pose,
            linear_velocity: self.state.linear_velocity,
            angular_velocity: self.state.angular_velocity,
            battery_mah: self.state.battery_mah,
            reservoir_ml: self.state.reservoir_ml,
            mode: self.state.mode,
            fsm_state: self.status.fsm_state,
            command: cmd,
            events: timed,
        });
        self.tick += 1;
        frames
    }

    fn set_mode(&mut self, to: Mode, events: &mut Vec<Event>) {
        if self.state.mode != to {
            events.push(Event::ModeChanged {
                from: self.state.mode,
                to,
            });
            self.state.mode = to;
        }
    }

    fn set_fsm(&mut self, to: FsmState, events: &mut Vec<Event>) {
        if self.status.fsm_state != to {
            events.push(Event::FsmChanged {
                from: self.status.fsm_state,
                to,
            });
            self.status.fsm_state = to;
        }
    }

    fn fault(&mut self, now: f64, reason: &str, events: &mut Vec<Event>) {
        if self.status.fsm_state.is_terminal() {
            return;
        }
        events.push(Event::Fault {
            reason: reason.to_string(),
        });
        self.set_fsm(FsmState::Fault, events);
        self.status.finish(FsmState::Fault, now);
    }

    /// Keeps the rover mode consistent with the mission state machine.
    fn sync_mode(&mut self, events: &mut Vec<Event>) {
        match self.status.fsm_state {
            FsmState::Done => self.set_mode(Mode::Done, events),
            FsmState::Fault => self.set_mode(Mode::Fault, events),
            FsmState::Rtl if self.state.mode == Mode::Auto => self.set_mode(Mode::Rtl, events),
            FsmState::Navigate | FsmState::Inspect | FsmState::Treat
                if self.state.mode == Mode::Rtl =>
            {
                self.set_mode(Mode::Auto, events)
            }
            _ => {}
        }
    }

    fn intake(
        &mut self,
        now: f64,
        external: Vec<Inbound>,
        events: &mut Vec<Event>,
        outbound: &mut Vec<Message>,
    ) {
        while self.schedule.front().is_some_and(|c| c.at_s <= now + 1e-9) {
            let c = self.schedule.pop_front().expect("front exists");
            match self.gcs_encoder.encode(&c.message) {
                Ok((_, bytes)) => self.uplink.send(self.tick, bytes),
                Err(e) => log::warn!("scheduled command not encodable: {e}"),
            }
        }
        let mut inbound: Vec<(u32, Message)> = Vec::new();
        for bytes in self.uplink.deliver(self.tick) {
            match decode(&bytes) {
                Ok(x) => inbound.push(x),
                Err(e) => {
                    self.link.commands_rejected += 1;
                    log::warn!("rejected uplink frame: {e}");
                }
            }
        }
        inbound.extend(external.into_iter().map(|i| (i.seq, i.message)));

        for (seq, msg) in inbound {
            self.link.commands_delivered += 1;
            let upload = match &msg {
                Message::MissionUpload { waypoints } => Some(waypoints.clone()),
                _ => None,
            };
            let world = &self.world;
            let ack = self.session.ingest(seq, msg, |id| world.node(id).is_some());
            if let (Some(wps), Some(Message::Ack { status, .. })) = (upload, &ack) {
                if *status != crate::telemetry::AckStatus::Ok {
                    events.push(Event::MissionUploaded {
                        waypoints: wps.into_iter().map(crate::environment::NodeId).collect(),
                        accepted: false,
                    });
                }
            }
            if let Some(ack) = ack {
                self.link.acks.push(ack.clone());
                outbound.push(ack);
            }
        }

        let view = self.session.take();
        if self.state.mode.is_terminal() || self.status.fsm_state.is_terminal() {
            return;
        }
        if let Some(mode) = view.mode {
            self.apply_mode_command(mode, events);
        }
        if let Some(waypoints) = view.mission {
            if waypoints != self.mission.waypoints {
                self.mission.waypoints = waypoints.clone();
                self.status.current_waypoint_index = 0;
                self.status.nodes_reached.clear();
                self.status.nodes_skipped.clear();
                self.status.engagement = None;
                self.status.invalidate_path();
                if matches!(self.status.fsm_state, FsmState::Rtl | FsmState::Inspect | FsmState::Treat) {
                    self.set_fsm(FsmState::Navigate, events);
                }
                events.push(Event::MissionUploaded {
                    waypoints,
                    accepted: true,
                });
            }
        }
        if let Some(cmd) = view.manual {
            if self.state.mode == Mode::Manual {
                self.latch.update(cmd, now);
            } else {
                log::debug!("manual command ignored in {} mode", self.state.mode.name());
                events.push(Event::ManualIgnored);
            }
        }
    }

    fn apply_mode_command(&mut self, mode: Mode, events: &mut Vec<Event>) {
        if mode == self.state.mode {
            return;
        }
        let leaving_manual = self.state.mode == Mode::Manual;
        self.set_mode(mode, events);
        match mode {
            Mode::Manual => self.latch.clear(),
            Mode::Rtl => {
                self.status.engagement = None;
                self.status.invalidate_path();
                self.set_fsm(FsmState::Rtl, events);
            }
            Mode::Auto => {
                self.status.invalidate_path();
                if self.status.fsm_state == FsmState::Rtl
                    && self.status.current_waypoint_index < self.mission.waypoints.len()
                {
                    self.set_fsm(FsmState::Navigate, events);
                }
            }
            Mode::Idle | Mode::Done | Mode::Fault => {}
        }
        if leaving_manual {
            self.latch.clear();
            self.status.invalidate_path();
        }
    }

    fn publish(&mut self, now: f64, events: &[Event], outbound: &mut Vec<Message>, gps: crate::geom::Vec2) {
        for e in events {
            match e {
                Event::Detection {
                    class,
                    confidence,
                    bbox,
                    site,
                } => outbound.push(Message::DetectionEvent {
                    class_id: class.id(),
                    confidence: *confidence as f32,
                    bbox: [
                        bbox.x_min as f32,
                        bbox.y_min as f32,
                        bbox.x_max as f32,
                        bbox.y_max as f32,
                    ],
                    site: site.map(|s| s.0),
                }),
                Event::SprayApplied {
                    treated,
                    reservoir_ml,
                } => outbound.push(Message::SprayEvent {
                    sites: treated.iter().map(|s| s.0).collect(),
                    reservoir_ml: *reservoir_ml as f32,
                }),
                Event::NodeReached { node } => outbound.push(Message::NodeReached {
                    node: node.0,
                    clock_s: now as f32,
                }),
                _ => {}
            }
        }
        if self.tick.is_multiple_of(TELEMETRY_EVERY_TICKS) {
            let s = &self.state;
            outbound.push(Message::Telemetry {
                x: s.pose.position.x as f32,
                y: s.pose.position.y as f32,
                heading: s.pose.heading as f32,
                battery_mah: s.battery_mah as f32,
                reservoir_ml: s.reservoir_ml as f32,
                fsm_state: self.status.fsm_state,
                gps_x: gps.x as f32,
                gps_y: gps.y as f32,
            });
        }
        if now >= self.next_heartbeat_s - 1e-9 {
            outbound.push(Message::Heartbeat {
                mode: self.state.mode,
                clock_s: now as f32,
            });
            self.next_heartbeat_s += HEARTBEAT_PERIOD_S;
        }
    }

    fn encode_outbound(&mut self, outbound: Vec<Message>) -> Vec<(u32, Message, Vec<u8>)> {
        let mut frames = Vec::with_capacity(outbound.len());
        for msg in outbound {
            match self.rover_encoder.encode(&msg) {
                Ok((seq, bytes)) => {
                    *self.link.frames_sent.entry(msg.type_code()).or_default() += 1;
                    self.downlink.send(self.tick, bytes.clone());
                    frames.push((seq, msg, bytes));
                }
                Err(e) => log::warn!("dropping outbound message: {e}"),
            }
        }
        for bytes in self.downlink.deliver(self.tick) {
            if decode(&bytes).is_ok() {
                self.link.frames_received_by_gcs += 1;
            }
        }
        frames
    }

    /// Final report and trace. Fails only if the mission has not ended.
    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        let report = mission_report(ReportInputs {
            status: &self.status,
            world: &self.world,
            waypoint_count: self.mission.waypoints.len(),
            battery_capacity_mah: self.scenario.rover.battery_capacity_mah,
            final_battery_mah: self.state.battery_mah,
            events: &self.events,
            poses: &self.poses,
            camera_fov: self.scenario.detector.fov,
            camera_range: self.scenario.detector.range,
            spray_range: self.scenario.rover.spray_range_m,
            ledger: Some(&self.scenario.ledger),
        })?;
        self.link.uplink = self.uplink.stats.clone();
        self.link.downlink = self.downlink.stats.clone();
        Ok(RunOutput {
            report,
            trace: self.trace,
            link: self.link,
            final_state: self.state,
            final_status: self.status,
            world: self.world,
        })
    }
}

/// Runs a scenario to completion (DONE, FAULT, or the time limit).
pub fn run(scenario: &Scenario, config: &RunConfig) -> Result<RunOutput, SimError> {
    let mut sim = Simulation::new(scenario.clone(), config.clone())?;
    let pace = (config.realtime > 0.0).then(|| Duration::from_secs_f64(config.dt_s / config.realtime));
    let started = Instant::now();
    while !sim.is_finished() {
        sim.step(Vec::new());
        if let Some(p) = pace {
            let due = started + p.mul_f64(sim.tick_count() as f64);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }
    sim.finish()
}
