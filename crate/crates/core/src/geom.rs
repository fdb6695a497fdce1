//! Planar geometry shared by the world model, planner and sensors.
//!
//! Frame convention: meters in the East-North plane, headings in radians
//! counter-clockwise from +x, wrapped to (-π, π].

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            heading: wrap_angle(heading),
        }
    }

    /// Bearing of `target` relative to the current heading, in (-π, π].
    pub fn relative_bearing(&self, target: Vec2) -> f64 {
        wrap_angle((target - self.position).angle() - self.heading)
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return a;
    }
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps -π to π already; guard the open lower end.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            min: Vec2::new(xmin, ymin),
            max: Vec2::new(xmax, ymax),
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Rectangle shrunk by `margin` on every side (may become empty).
    pub fn shrink(&self, margin: f64) -> Rect {
        Rect {
            min: self.min + Vec2::new(margin, margin),
            max: self.max - Vec2::new(margin, margin),
        }
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
        )
    }

    /// Distance from an interior point to the nearest wall.
    pub fn wall_clearance(&self, p: Vec2) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    /// Distance along a ray from an interior point to the boundary.
    pub fn ray_exit(&self, origin: Vec2, dir: Vec2) -> f64 {
        let mut t = f64::INFINITY;
        if dir.x > 0.0 {
            t = t.min((self.max.x - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            t = t.min((self.min.x - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            t = t.min((self.max.y - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            t = t.min((self.min.y - origin.y) / dir.y);
        }
        t.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    /// Smallest non-negative ray parameter hitting the circle, for a unit
    /// direction. A ray starting inside hits at 0.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let oc = origin - self.center;
        let c = oc.norm_sq() - self.radius * self.radius;
        if c <= 0.0 {
            return Some(0.0);
        }
        let b = oc.dot(dir);
        if b >= 0.0 {
            return None;
        }
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        Some(-b - disc.sqrt())
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        (p.distance(self.center) - self.radius).max(0.0)
    }
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolygonError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices are collinear")]
    Degenerate,
    #[error("polygon is not convex")]
    NotConvex,
}

impl ConvexPolygon {
    /// Validates convexity and normalizes the winding to counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self, PolygonError> {
        let n = vertices.len();
        if n < 3 {
            return Err(PolygonError::TooFewVertices(n));
        }
        let area2: f64 = (0..n)
            .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
            .sum();
        if area2.abs() < 1e-12 {
            return Err(PolygonError::Degenerate);
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if (b - a).cross(c - b) < -1e-12 {
                return Err(PolygonError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Signed clearance of `p` against each edge's outward normal; the
    /// maximum is negative strictly inside.
    fn max_edge_offset(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let outward = -(b - a).perp().normalized();
                (p - a).dot(outward)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.max_edge_offset(p) <= 0.0
    }

    /// Euclidean distance from `p` to the polygon (0 inside).
    pub fn distance_to(&self, p: Vec2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        if self.contains(origin) {
            return Some(0.0);
        }
        let mut best: Option<f64> = None;
        for (a, b) in self.edges() {
            if let Some(t) = ray_segment_hit(origin, dir, a, b) {
                best = Some(best.map_or(t, |bt: f64| bt.min(t)));
            }
        }
        best
    }

    /// Whether the segment p→q passes through the interior deeper than `eps`.
    /// Cyrus–Beck clipping against the edge half-planes.
    pub fn segment_crosses_interior(&self, p: Vec2, q: Vec2, eps: f64) -> bool {
        let d = q - p;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for (a, b) in self.edges() {
            let outward = -(b - a).perp().normalized();
            // inside when (x - a)·n < -eps
            let num = (p - a).dot(outward) + eps;
            let den = d.dot(outward);
            if den.abs() < 1e-15 {
                if num >= 0.0 {
                    return false;
                }
                continue;
            }
            let t = -num / den;
            if den < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 >= t1 {
                return false;
            }
        }
        (t1 - t0) * d.norm() > eps
    }

    /// Outward offset by `margin`: each edge pushed along its normal and
    /// adjacent offset lines intersected. Contains the Minkowski sum with a
    /// disk of radius `margin`.
    pub fn offset(&self, margin: f64) -> ConvexPolygon {
        let n = self.vertices.len();
        let lines: Vec<(Vec2, Vec2)> = self
            .edges()
            .map(|(a, b)| {
                let outward = -(b - a).perp().normalized();
                (a + outward * margin, b - a)
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (p1, d1) = lines[(i + n - 1) % n];
            let (p2, d2) = lines[i];
            let denom = d1.cross(d2);
            if denom.abs() < 1e-12 {
                out.push(p2);
            } else {
                let t = (p2 - p1).cross(d2) / denom;
                out.push(p1 + d1 * t);
            }
        }
        ConvexPolygon { vertices: out }
    }

    /// Regular polygon circumscribing a circle, so every edge stays at least
    /// `radius` from the center.
    pub fn circumscribing(center: Vec2, radius: f64, sides: usize) -> ConvexPolygon {
        let sides = sides.max(3);
        let step = 2.0 * std::f64::consts::PI / sides as f64;
        let r = radius / (step / 2.0).cos();
        let vertices = (0..sides)
            .map(|i| center + Vec2::from_polar(r, step * i as f64))
            .collect();
        ConvexPolygon { vertices }
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sq();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Ray (unit `dir`) against segment a→b; returns the ray parameter.
pub fn ray_segment_hit(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = dir.cross(e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let ao = a - origin;
    let t = ao.cross(e) / denom;
    let u = ao.cross(dir) / denom;
    if t >= 0.0 && (0.0..=1.0).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Whether segment p→q comes within `radius` of `center`.
pub fn segment_hits_circle(p: Vec2, q: Vec2, center: Vec2, radius: f64) -> bool {
    point_segment_distance(center, p, q) < radius
}
