//! Visibility-graph shortest paths around inflated obstacles.

use crate::environment::{NodeId, Obstacle, WorldMap};
use crate::geom::{ConvexPolygon, Rect, Vec2};

use super::Mission;

const CIRCLE_SIDES: usize = 12;
const EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("waypoint node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("waypoint node {0} is unreachable")]
    Unreachable(NodeId),
}

/// Configuration space: obstacles grown by the inflation margin, walls pulled
/// in by the same margin.
#[derive(Debug, Clone)]
pub struct Planner {
    regions: Vec<ConvexPolygon>,
    free: Rect,
    vertices: Vec<Vec2>,
}

impl Planner {
    pub fn new(world: &WorldMap, inflation: f64) -> Self {
        let regions: Vec<ConvexPolygon> = world
            .obstacles
            .iter()
            .map(|o| match o {
                Obstacle::Circle(c) => {
                    ConvexPolygon::circumscribing(c.center, c.radius + inflation, CIRCLE_SIDES)
                }
                Obstacle::Polygon(p) => p.offset(inflation),
            })
            .collect();
        let free = world.bounds.shrink(inflation);
        let mut vertices = Vec::new();
        for (i, region) in regions.iter().enumerate() {
            for &v in region.vertices() {
                // nudge outward so graph vertices sit strictly outside
                let c = centroid(region.vertices());
                let v = v + (v - c).normalized() * 1e-5;
                let blocked = regions
                    .iter()
                    .enumerate()
                    .any(|(j, r)| j != i && r.contains(v));
                if free.contains(v) && !blocked {
                    vertices.push(v);
                }
            }
        }
        Self {
            regions,
            free,
            vertices,
        }
    }

    pub fn regions(&self) -> &[ConvexPolygon] {
        &self.regions
    }

    /// Clear line of sight between two points. A region that contains an
    /// endpoint is ignored so the rover can leave or enter a tight spot.
    pub fn segment_clear(&self, p: Vec2, q: Vec2) -> bool {
        self.regions.iter().all(|r| {
            if r.contains(p) || r.contains(q) {
                return true;
            }
            !r.segment_crosses_interior(p, q, EPS)
        })
    }

    /// Shortest polyline from `from` to `to`, or `None` if disconnected.
    pub fn plan_leg(&self, from: Vec2, to: Vec2) -> Option<Vec<Vec2>> {
        if self.segment_clear(from, to) {
            return Some(vec![from, to]);
        }
        let mut pts = Vec::with_capacity(self.vertices.len() + 2);
        pts.push(from);
        pts.push(to);
        pts.extend(self.vertices.iter().copied().filter(|v| self.free.contains(*v)));
        let n = pts.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut done = vec![false; n];
        dist[0] = 0.0;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for i in 0..n {
                if !done[i] && dist[i] < best {
                    best = dist[i];
                    u = i;
                }
            }
            if u == usize::MAX || u == 1 {
                break;
            }
            done[u] = true;
            for v in 0..n {
                if done[v] || v == u {
                    continue;
                }
                let nd = dist[u] + pts[u].distance(pts[v]);
                if nd < dist[v] && self.segment_clear(pts[u], pts[v]) {
                    dist[v] = nd;
                    prev[v] = u;
                }
            }
        }
        if !dist[1].is_finite() {
            return None;
        }
        let mut path = vec![pts[1]];
        let mut cur = 1;
        while cur != 0 {
            cur = prev[cur];
            path.push(pts[cur]);
        }
        path.reverse();
        Some(path)
    }
}

fn centroid(vs: &[Vec2]) -> Vec2 {
    let sum = vs.iter().fold(Vec2::ZERO, |a, &b| a + b);
    sum * (1.0 / vs.len() as f64)
}

pub fn path_length(path: &[Vec2]) -> f64 {
    path.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Full route from `from` through every mission waypoint in order.
pub fn plan_route(
    world: &WorldMap,
    mission: &Mission,
    inflation: f64,
    from: Vec2,
) -> Result<Vec<Vec2>, PlanError> {
    let planner = Planner::new(world, inflation);
    let mut route = vec![from];
    let mut cur = from;
    for &id in &mission.waypoints {
        let node = world.node(id).ok_or(PlanError::UnknownNode(id))?;
        let leg = planner
            .plan_leg(cur, node.center)
            .ok_or(PlanError::Unreachable(id))?;
        route.extend(leg.into_iter().skip(1));
        cur = node.center;
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::CheckpointNode;
    use crate::geom::Circle;

    fn world() -> WorldMap {
        WorldMap::empty(Rect::new(0.0, 0.0, 20.0, 20.0), Vec2::new(1.0, 1.0))
    }

    fn mission(ids: &[u32]) -> Mission {
        Mission {
            waypoints: ids.iter().map(|&i| NodeId(i)).collect(),
            ..Mission::default()
        }
    }

    fn node(id: u32, x: f64, y: f64) -> CheckpointNode {
        CheckpointNode {
            id: NodeId(id),
            center: Vec2::new(x, y),
            acceptance_radius: 0.3,
        }
    }

    #[test]
    fn empty_world_is_straight() {
        let mut w = world();
        w.nodes = vec![node(1, 5.0, 1.0), node(2, 5.0, 5.0)];
        let r = plan_route(&w, &mission(&[1, 2]), 0.5, Vec2::new(1.0, 1.0)).unwrap();
        assert_eq!(r.len(), 3);
        assert!((path_length(&r) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn detours_around_circle() {
        let mut w = world();
        w.obstacles.push(Obstacle::Circle(Circle {
            center: Vec2::new(10.0, 10.0),
            radius: 1.0,
        }));
        w.nodes = vec![node(1, 15.0, 10.0)];
        let r = plan_route(&w, &mission(&[1]), 0.5, Vec2::new(5.0, 10.0)).unwrap();
        assert!(path_length(&r) > 10.0);
        for seg in r.windows(2) {
            let d = crate::geom::point_segment_distance(Vec2::new(10.0, 10.0), seg[0], seg[1]);
            assert!(d >= 1.5 - 1e-6, "segment too close: {d}");
        }
    }

    #[test]
    fn ringed_node_is_unreachable() {
        let mut w = world();
        for k in 0..8 {
            let a = k as f64 * std::f64::consts::PI / 4.0;
            w.obstacles.push(Obstacle::Circle(Circle {
                center: Vec2::new(10.0 + 1.5 * a.cos(), 10.0 + 1.5 * a.sin()),
                radius: 0.5,
            }));
        }
        w.nodes = vec![node(4, 10.0, 10.0)];
        let err = plan_route(&w, &mission(&[4]), 0.5, Vec2::new(2.0, 2.0)).unwrap_err();
        assert_eq!(err, PlanError::Unreachable(NodeId(4)));
        assert!(err.to_string().contains('4'));
    }

    #[test]
    fn unknown_node() {
        let err = plan_route(&world(), &mission(&[9]), 0.5, Vec2::new(2.0, 2.0)).unwrap_err();
        assert_eq!(err, PlanError::UnknownNode(NodeId(9)));
    }
}
