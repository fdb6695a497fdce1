//! Rover plant: unicycle kinematics, battery and reservoir bookkeeping, GPS,
//! ultrasonic rangers and the spray nozzle.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::environment::{SiteId, WorldMap};
use crate::geom::{wrap_angle, Pose, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Idle,
    Auto,
    Manual,
    Rtl,
    Done,
    Fault,
}

impl Mode {
    pub fn code(self) -> u8 {
        match self {
            Mode::Idle => 0,
            Mode::Auto => 1,
            Mode::Manual => 2,
            Mode::Rtl => 3,
            Mode::Done => 4,
            Mode::Fault => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Mode> {
        Some(match code {
            0 => Mode::Idle,
            1 => Mode::Auto,
            2 => Mode::Manual,
            3 => Mode::Rtl,
            4 => Mode::Done,
            5 => Mode::Fault,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Mode::Done | Mode::Fault)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Idle => "IDLE",
            Mode::Auto => "AUTO",
            Mode::Manual => "MANUAL",
            Mode::Rtl => "RTL",
            Mode::Done => "DONE",
            Mode::Fault => "FAULT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoverParams {
    pub max_speed: f64,
    pub max_turn_rate: f64,
    pub wheelbase: f64,
    pub body_radius: f64,
    pub battery_capacity_mah: f64,
    pub drive_draw_ma: f64,
    pub idle_draw_ma: f64,
    pub spray_draw_ma: f64,
    pub reservoir_capacity_ml: f64,
    pub spray_dose_ml: f64,
    pub spray_range_m: f64,
    pub gps_sigma_m: f64,
    pub ultrasonic_max_range_m: f64,
    pub ultrasonic_bearings: Vec<f64>,
}

impl Default for RoverParams {
    fn default() -> Self {
        Self {
            max_speed: 0.5,
            max_turn_rate: 2.0,
            wheelbase: 0.3,
            body_radius: 0.2,
            battery_capacity_mah: 3000.0,
            drive_draw_ma: 1800.0,
            idle_draw_ma: 250.0,
            spray_draw_ma: 900.0,
            reservoir_capacity_ml: 500.0,
            spray_dose_ml: 10.0,
            spray_range_m: 0.5,
            gps_sigma_m: 0.02,
            ultrasonic_max_range_m: 4.0,
            ultrasonic_bearings: vec![-0.5, 0.0, 0.5],
        }
    }
}

impl RoverParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("max_speed", self.max_speed),
            ("max_turn_rate", self.max_turn_rate),
            ("wheelbase", self.wheelbase),
            ("body_radius", self.body_radius),
            ("battery", self.battery_capacity_mah),
            ("drive_draw", self.drive_draw_ma),
            ("idle_draw", self.idle_draw_ma),
            ("spray_draw", self.spray_draw_ma),
            ("reservoir", self.reservoir_capacity_ml),
            ("dose", self.spray_dose_ml),
            ("spray_range", self.spray_range_m),
            ("ultrasonic_range", self.ultrasonic_max_range_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("rover {name} must be > 0"));
            }
        }
        if !(self.gps_sigma_m >= 0.0) {
            return Err("rover gps_sigma must be >= 0".into());
        }
        if self.ultrasonic_bearings.is_empty() {
            return Err("rover needs at least one ultrasonic bearing".into());
        }
        Ok(())
    }

    /// Left/right track speeds for a body twist.
    pub fn track_speeds(&self, cmd: &ControlCommand) -> (f64, f64) {
        let half = self.wheelbase / 2.0;
        (cmd.linear - cmd.angular * half, cmd.linear + cmd.angular * half)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub linear: f64,
    pub angular: f64,
    pub spray_trigger: bool,
}

impl ControlCommand {
    pub const STOP: ControlCommand = ControlCommand {
        linear: 0.0,
        angular: 0.0,
        spray_trigger: false,
    };

    pub fn new(linear: f64, angular: f64, spray_trigger: bool) -> Self {
        Self {
            linear,
            angular,
            spray_trigger,
        }
    }

    /// Clamped to the rover's speed and turn-rate limits; non-finite inputs
    /// become zero.
    pub fn clamped(self, params: &RoverParams) -> ControlCommand {
        let fix = |v: f64, lim: f64| if v.is_finite() { v.clamp(-lim, lim) } else { 0.0 };
        ControlCommand {
            linear: fix(self.linear, params.max_speed),
            angular: fix(self.angular, params.max_turn_rate),
            spray_trigger: self.spray_trigger,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoverState {
    pub pose: Pose,
    pub linear_velocity: f64,
    pub angular_velocity: f64,
    pub battery_mah: f64,
    pub reservoir_ml: f64,
    pub mode: Mode,
    pub clock_s: f64,
    /// Set when the last step was blocked by an obstacle or wall.
    pub proximity: bool,
}

impl RoverState {
    pub fn at_home(world: &WorldMap, params: &RoverParams) -> Self {
        Self {
            pose: Pose {
                position: world.home,
                heading: 0.0,
            },
            linear_velocity: 0.0,
            angular_velocity: 0.0,
            battery_mah: params.battery_capacity_mah,
            reservoir_ml: params.reservoir_capacity_ml,
            mode: Mode::Idle,
            clock_s: 0.0,
            proximity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error("dt must be > 0, got {0}")]
    BadDt(f64),
    #[error("rover is in terminal mode {0:?}")]
    Terminal(Mode),
}

/// Advances the plant by one tick.
///
/// Translation is blocked (heading change kept) when the new position would
/// put the body inside an obstacle or past a wall. An exhausted battery
/// moves the rover to FAULT.
pub fn step(
    state: &RoverState,
    world: &WorldMap,
    params: &RoverParams,
    cmd: ControlCommand,
    dt: f64,
) -> Result<RoverState, StepError> {
    if !(dt > 0.0) {
        return Err(StepError::BadDt(dt));
    }
    if state.mode.is_terminal() {
        return Err(StepError::Terminal(state.mode));
    }
    let cmd = cmd.clamped(params);
    let mut next = state.clone();
    let h = state.pose.heading;
    let candidate = state.pose.position + Vec2::new(h.cos(), h.sin()) * (cmd.linear * dt);
    // Moves that increase clearance are allowed so a blocked rover can back off.
    let blocked = cmd.linear != 0.0
        && collides(world, params, candidate)
        && world.clearance(candidate) <= world.clearance(state.pose.position);
    if blocked {
        next.linear_velocity = 0.0;
    } else {
        next.pose.position = candidate;
        next.linear_velocity = cmd.linear;
    }
    next.proximity = blocked;
    next.pose.heading = wrap_angle(h + cmd.angular * dt);
    next.angular_velocity = cmd.angular;

    let moving = cmd.linear != 0.0 || cmd.angular != 0.0;
    let draw = if moving {
        params.drive_draw_ma
    } else {
        params.idle_draw_ma
    };
    next.battery_mah = (state.battery_mah - draw * dt / 3600.0).max(0.0);
    next.clock_s = state.clock_s + dt;
    if next.battery_mah <= 0.0 {
        next.mode = Mode::Fault;
    }
    Ok(next)
}

/// Body disc overlapping an obstacle or extending past a wall.
pub fn collides(world: &WorldMap, params: &RoverParams, p: Vec2) -> bool {
    if world.bounds.wall_clearance(p) < params.body_radius {
        return true;
    }
    world
        .obstacles
        .iter()
        .any(|o| o.distance_to(p) < params.body_radius)
}

/// True position plus independent zero-mean Gaussian noise per axis.
pub fn gps_read<R: Rng + ?Sized>(state: &RoverState, sigma: f64, rng: &mut R) -> Vec2 {
    let p = state.pose.position;
    if sigma <= 0.0 {
        return p;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    Vec2::new(p.x + normal.sample(rng), p.y + normal.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UltrasonicReading {
    /// Relative to heading.
    pub bearing: f64,
    pub distance: f64,
}

/// One range sample per configured bearing, in configuration order.
pub fn ultrasonic_scan(
    state: &RoverState,
    world: &WorldMap,
    params: &RoverParams,
) -> Vec<UltrasonicReading> {
    params
        .ultrasonic_bearings
        .iter()
        .map(|&bearing| UltrasonicReading {
            bearing,
            distance: world.ray_distance(
                state.pose.position,
                state.pose.heading + bearing,
                params.ultrasonic_max_range_m,
            ),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SprayOutcome {
    Applied { treated: Vec<SiteId> },
    /// Reservoir below one dose; nothing dispensed.
    Rejected,
}

/// Fires one dose. Every active site within spray range is deactivated; the
/// dose is consumed whether or not anything was in range.
pub fn spray(
    state: &mut RoverState,
    world: &mut WorldMap,
    params: &RoverParams,
    dt: f64,
) -> SprayOutcome {
    if state.reservoir_ml < params.spray_dose_ml {
        return SprayOutcome::Rejected;
    }
    let pos = state.pose.position;
    let mut treated = Vec::new();
    for site in world.sites.iter_mut().filter(|s| s.active) {
        if site.center.distance(pos) <= params.spray_range_m {
            site.active = false;
            treated.push(site.id);
        }
    }
    state.reservoir_ml = (state.reservoir_ml - params.spray_dose_ml).max(0.0);
    state.battery_mah = (state.battery_mah - params.spray_draw_ma * dt / 3600.0).max(0.0);
    if state.battery_mah <= 0.0 {
        state.mode = Mode::Fault;
    }
    SprayOutcome::Applied { treated }
}
