//! World model: arena bounds, obstacles, breeding sites and checkpoint nodes.

mod scenario;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{Circle, ConvexPolygon, Pose, Rect, Vec2};

pub use scenario::{load_scenario, Scenario, ScenarioError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Obstacle {
    Circle(Circle),
    Polygon(ConvexPolygon),
}

impl Obstacle {
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self {
            Obstacle::Circle(c) => c.ray_hit(origin, dir),
            Obstacle::Polygon(p) => p.ray_hit(origin, dir),
        }
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        match self {
            Obstacle::Circle(c) => c.distance_to(p),
            Obstacle::Polygon(poly) => poly.distance_to(p),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.distance_to(p) <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreedingSite {
    pub id: SiteId,
    pub center: Vec2,
    pub radius: f64,
    pub pre_population: u32,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointNode {
    pub id: NodeId,
    pub center: Vec2,
    pub acceptance_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldMap {
    pub bounds: Rect,
    pub obstacles: Vec<Obstacle>,
    pub sites: Vec<BreedingSite>,
    pub nodes: Vec<CheckpointNode>,
    pub home: Vec2,
}

/// An active site inside the camera cone.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSighting {
    pub site: BreedingSite,
    /// Relative to rover heading, counter-clockwise positive.
    pub bearing: f64,
    pub distance: f64,
}

impl WorldMap {
    pub fn empty(bounds: Rect, home: Vec2) -> Self {
        Self {
            bounds,
            obstacles: Vec::new(),
            sites: Vec::new(),
            nodes: Vec::new(),
            home,
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&CheckpointNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn site(&self, id: SiteId) -> Option<&BreedingSite> {
        self.sites.iter().find(|s| s.id == id)
    }

    pub fn site_mut(&mut self, id: SiteId) -> Option<&mut BreedingSite> {
        self.sites.iter_mut().find(|s| s.id == id)
    }

    /// Total pre-treatment population over all sites.
    pub fn population_pre(&self) -> u64 {
        self.sites.iter().map(|s| u64::from(s.pre_population)).sum()
    }

    /// Population still carried by active (untreated) sites.
    pub fn population_post(&self) -> u64 {
        self.sites
            .iter()
            .filter(|s| s.active)
            .map(|s| u64::from(s.pre_population))
            .sum()
    }

    /// Smallest clearance from `p` to any obstacle or wall.
    pub fn clearance(&self, p: Vec2) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.distance_to(p))
            .fold(self.bounds.wall_clearance(p), f64::min)
    }

    /// Distance along `bearing` (absolute, radians) to the nearest obstacle
    /// or arena wall, clamped to `max_range`.
    pub fn ray_distance(&self, origin: Vec2, bearing: f64, max_range: f64) -> f64 {
        let dir = Vec2::from_polar(1.0, bearing);
        let mut best = self.bounds.ray_exit(origin, dir).min(max_range);
        for obstacle in &self.obstacles {
            if let Some(t) = obstacle.ray_hit(origin, dir) {
                best = best.min(t);
            }
        }
        best.max(0.0)
    }

    /// Active sites whose centers lie inside the camera cone, nearest first.
    pub fn sites_in_fov(&self, pose: &Pose, fov: f64, range: f64) -> Vec<SiteSighting> {
        let half = fov / 2.0;
        let mut seen: Vec<SiteSighting> = self
            .sites
            .iter()
            .filter(|s| s.active)
            .filter_map(|s| {
                let distance = pose.position.distance(s.center);
                if distance > range {
                    return None;
                }
                let bearing = if distance == 0.0 {
                    0.0
                } else {
                    pose.relative_bearing(s.center)
                };
                (bearing.abs() <= half).then(|| SiteSighting {
                    site: s.clone(),
                    bearing,
                    distance,
                })
            })
            .collect();
        seen.sort_by(|a, b| {
            a.distance
                .total_cmp(&b.distance)
                .then(a.site.id.cmp(&b.site.id))
        });
        seen
    }

    /// Checks every structural invariant of the map.
    pub fn validate(&self) -> Result<(), String> {
        let b = &self.bounds;
        if !(b.min.x < b.max.x && b.min.y < b.max.y) {
            return Err("bounds must have positive extent".into());
        }
        if !b.contains(self.home) {
            return Err("home lies outside bounds".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            match o {
                Obstacle::Circle(c) => {
                    if !(c.radius > 0.0) {
                        return Err(format!("obstacle {i}: radius must be > 0"));
                    }
                    if !b.contains(c.center) {
                        return Err(format!("obstacle {i} lies outside bounds"));
                    }
                }
                Obstacle::Polygon(p) => {
                    if p.vertices().iter().any(|v| !b.contains(*v)) {
                        return Err(format!("obstacle {i} lies outside bounds"));
                    }
                }
            }
        }
        let mut site_ids: Vec<SiteId> = self.sites.iter().map(|s| s.id).collect();
        site_ids.sort();
        if site_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate site id".into());
        }
        for s in &self.sites {
            if !b.contains(s.center) {
                return Err(format!("site {} lies outside bounds", s.id));
            }
            if !(s.radius > 0.0) {
                return Err(format!("site {}: radius must be > 0", s.id));
            }
            if s.pre_population < 1 {
                return Err(format!("site {}: pre_population must be >= 1", s.id));
            }
        }
        let mut node_ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        node_ids.sort();
        if node_ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate node id".into());
        }
        for n in &self.nodes {
            if !b.contains(n.center) {
                return Err(format!("node {} lies outside bounds", n.id));
            }
            if !(n.acceptance_radius > 0.0) {
                return Err(format!("node {}: acceptance radius must be > 0", n.id));
            }
        }
        Ok(())
    }
}
