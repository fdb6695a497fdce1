//! Pure-pursuit tracking of a piecewise-linear path.

use crate::geom::{wrap_angle, Pose, Vec2};
use crate::rover::ControlCommand;

/// Beyond this heading error the rover turns in place instead of arcing.
pub const TURN_IN_PLACE: f64 = std::f64::consts::FRAC_PI_3;

/// Point at `lookahead` along the path ahead of `pos`. `cursor` is the index
/// of the current segment's start and only moves forward.
pub fn lookahead_point(path: &[Vec2], cursor: &mut usize, pos: Vec2, lookahead: f64) -> Vec2 {
    match path.len() {
        0 => return pos,
        1 => return path[0],
        _ => {}
    }
    let last_seg = path.len() - 2;
    *cursor = (*cursor).min(last_seg);
    while *cursor < last_seg && pos.distance(path[*cursor + 1]) < lookahead {
        *cursor += 1;
    }
    let (a, b) = (path[*cursor], path[*cursor + 1]);
    if *cursor == last_seg && pos.distance(b) <= lookahead {
        return b;
    }
    // far root of |a + t(b-a) - pos| = lookahead
    let d = b - a;
    let f = a - pos;
    let qa = d.norm_sq();
    if qa == 0.0 {
        return b;
    }
    let qb = 2.0 * f.dot(d);
    let qc = f.norm_sq() - lookahead * lookahead;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc >= 0.0 {
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if (0.0..=1.0).contains(&t) {
            return a + d * t;
        }
        if t > 1.0 {
            return b;
        }
    }
    // off the path: aim at the projection pushed forward by the lookahead
    let t = ((pos - a).dot(d) / qa).clamp(0.0, 1.0);
    let along = (t + lookahead / qa.sqrt()).min(1.0);
    a + d * along
}

/// Velocity command steering `pose` onto `target`.
pub fn pursue(pose: &Pose, target: Vec2, cruise: f64, max_turn: f64) -> ControlCommand {
    let to = target - pose.position;
    let dist = to.norm();
    if dist < 1e-9 {
        return ControlCommand::STOP;
    }
    let alpha = wrap_angle(to.angle() - pose.heading);
    if alpha.abs() > TURN_IN_PLACE {
        return ControlCommand::new(0.0, max_turn.copysign(alpha), false);
    }
    let v = cruise * alpha.cos();
    let curvature = 2.0 * alpha.sin() / dist;
    ControlCommand::new(v, (v * curvature).clamp(-max_turn, max_turn), false)
}
