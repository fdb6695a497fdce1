use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rover_sim::environment::{load_scenario, BreedingSite, Obstacle, SiteId, WorldMap};
use rover_sim::geom::{Circle, Pose, Rect, Vec2};
use rover_sim::rover::{gps_read, spray, step, ultrasonic_scan, ControlCommand, Mode, RoverParams, RoverState, SprayOutcome};

fn arena() -> WorldMap {
    WorldMap::empty(Rect::new(0.0, 0.0, 20.0, 20.0), Vec2::new(10.0, 10.0))
}

fn with_circle(cx: f64, cy: f64, r: f64) -> WorldMap {
    let mut w = arena();
    w.obstacles.push(Obstacle::Circle(Circle {
        center: Vec2::new(cx, cy),
        radius: r,
    }));
    w
}

fn site(id: u32, x: f64, y: f64) -> BreedingSite {
    BreedingSite {
        id: SiteId(id),
        center: Vec2::new(x, y),
        radius: 0.3,
        pre_population: 1,
        active: true,
    }
}

fn rover_at(x: f64, y: f64, heading: f64) -> RoverState {
    let mut s = RoverState::at_home(&arena(), &RoverParams::default());
    s.pose = Pose::new(x, y, heading);
    s.mode = Mode::Auto;
    s
}

/// Closed-form ray–circle intersection: solve |o + t·d − c|² = r² for the
/// smallest t ≥ 0.
fn analytic_hit(o: Vec2, bearing: f64, c: Vec2, r: f64) -> Option<f64> {
    let (dx, dy) = (bearing.cos(), bearing.sin());
    let (fx, fy) = (o.x - c.x, o.y - c.y);
    let b = fx * dx + fy * dy;
    let disc = b * b - (fx * fx + fy * fy - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [-b - s, -b + s].into_iter().filter(|&t| t >= 0.0).reduce(f64::min)
}

#[test]
fn ray_distance_examples() {
    let w = arena();
    assert_eq!(w.ray_distance(Vec2::new(10.0, 10.0), 0.3, 4.0), 4.0);
    let w = with_circle(12.0, 10.0, 0.5);
    assert!((w.ray_distance(Vec2::new(10.0, 10.0), 0.0, 4.0) - 1.5).abs() < 1e-12);
    assert_eq!(w.ray_distance(Vec2::new(10.0, 10.0), PI, 4.0), 4.0);
}

proptest! {
    #[test]
    fn ray_distance_matches_analytic_circle(
        ox in 6.0..14.0f64, oy in 6.0..14.0f64,
        cx in 6.0..14.0f64, cy in 6.0..14.0f64,
        r in 0.1..1.5f64, bearing in -PI..PI,
    ) {
        let o = Vec2::new(ox, oy);
        prop_assume!(o.distance(Vec2::new(cx, cy)) > r + 1e-6);
        let w = with_circle(cx, cy, r);
        let got = w.ray_distance(o, bearing, 5.0);
        // the walls are at least 6 m away, so only the circle can be hit
        let want = analytic_hit(o, bearing, Vec2::new(cx, cy), r).unwrap_or(5.0).min(5.0);
        prop_assert!((got - want).abs() < 1e-9, "got {got} want {want}");
    }

    #[test]
    fn ray_distance_is_monotone_in_max_range(
        ox in 1.0..19.0f64, oy in 1.0..19.0f64, bearing in -PI..PI,
        a in 0.1..10.0f64, b in 0.1..10.0f64,
    ) {
        let w = with_circle(10.0, 10.0, 1.0);
        let o = Vec2::new(ox, oy);
        prop_assume!(!w.obstacles[0].contains(o));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (dl, dh) = (w.ray_distance(o, bearing, lo), w.ray_distance(o, bearing, hi));
        prop_assert!(dl <= dh + 1e-12);
        prop_assert!(dl <= lo + 1e-12 && dh <= hi + 1e-12);
        prop_assert!(dl >= 0.0);
    }

    /// Point-in-cone oracle: a site is reported iff it is active, within range
    /// and the absolute angle between heading and the site is at most fov/2.
    #[test]
    fn sites_in_fov_matches_cone_oracle(
        heading in -PI..PI, fov in 0.2..PI, range in 0.5..8.0f64,
        pts in prop::collection::vec((0.5..19.5f64, 0.5..19.5f64, any::<bool>()), 0..12),
    ) {
        let mut w = arena();
        for (i, &(x, y, active)) in pts.iter().enumerate() {
            let mut s = site(i as u32, x, y);
            s.active = active;
            w.sites.push(s);
        }
        let pose = Pose::new(10.0, 10.0, heading);
        let seen = w.sites_in_fov(&pose, fov, range);
        let (hx, hy) = (heading.cos(), heading.sin());
        for s in &w.sites {
            let (dx, dy) = (s.center.x - 10.0, s.center.y - 10.0);
            let d = (dx * dx + dy * dy).sqrt();
            let cos_angle = (dx * hx + dy * hy) / d;
            let margin = 1e-9;
            let clearly_in = s.active && d <= range - margin && cos_angle >= (fov / 2.0).cos() + margin;
            let clearly_out = !s.active || d > range + margin || cos_angle < (fov / 2.0).cos() - margin;
            let listed = seen.iter().any(|v| v.site.id == s.id);
            if clearly_in { prop_assert!(listed, "site {:?} missing", s.id); }
            if clearly_out { prop_assert!(!listed, "site {:?} should be excluded", s.id); }
        }
        prop_assert!(seen.windows(2).all(|p| p[0].distance <= p[1].distance));
    }

    #[test]
    fn heading_stays_wrapped(h in -PI..PI, w in -2.0..2.0f64, dt in 0.01..2.0f64) {
        let next = step(&rover_at(10.0, 10.0, h), &arena(), &RoverParams::default(), ControlCommand::new(0.0, w, false), dt).unwrap();
        prop_assert!(next.pose.heading > -PI && next.pose.heading <= PI);
    }

    #[test]
    fn commanded_speed_is_clamped(v in -10.0..10.0f64, w in -10.0..10.0f64) {
        let p = RoverParams::default();
        let next = step(&rover_at(10.0, 10.0, 0.0), &arena(), &p, ControlCommand::new(v, w, false), 0.1).unwrap();
        prop_assert!(next.linear_velocity.abs() <= p.max_speed + 1e-12);
        prop_assert!(next.angular_velocity.abs() <= p.max_turn_rate + 1e-12);
        prop_assert!(next.pose.position.distance(Vec2::new(10.0, 10.0)) <= p.max_speed * 0.1 + 1e-12);
    }
}

#[test]
fn sites_in_fov_examples() {
    let mut w = arena();
    w.sites = vec![site(1, 11.0, 10.0), site(2, 9.0, 10.0)];
    let seen = w.sites_in_fov(&Pose::new(10.0, 10.0, 0.0), FRAC_PI_2, 3.0);
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].site.id, SiteId(1));
    assert!(seen[0].bearing.abs() < 1e-12);
    w.sites[0].active = false;
    assert!(w.sites_in_fov(&Pose::new(10.0, 10.0, 0.0), FRAC_PI_2, 3.0).is_empty());
}

#[test]
fn unicycle_closed_forms() {
    let p = RoverParams::default();
    let w = arena();
    let idle = step(&rover_at(5.0, 5.0, 0.0), &w, &p, ControlCommand::STOP, 2.0).unwrap();
    assert_eq!(idle.pose, Pose::new(5.0, 5.0, 0.0));
    assert!((p.battery_capacity_mah - idle.battery_mah - p.idle_draw_ma * 2.0 / 3600.0).abs() < 1e-12);

    let fwd = step(&rover_at(5.0, 5.0, 0.0), &w, &p, ControlCommand::new(0.5, 0.0, false), 1.0).unwrap();
    assert!((fwd.pose.position.x - 5.5).abs() < 1e-12 && (fwd.pose.position.y - 5.0).abs() < 1e-12);

    let turn = step(&rover_at(5.0, 5.0, 0.0), &w, &p, ControlCommand::new(0.0, FRAC_PI_2, false), 1.0).unwrap();
    assert!((turn.pose.heading - FRAC_PI_2).abs() < 1e-12);
    assert_eq!(turn.pose.position, Vec2::new(5.0, 5.0));
}

#[test]
fn step_rejects_bad_dt_and_terminal_modes() {
    let p = RoverParams::default();
    assert!(step(&rover_at(5.0, 5.0, 0.0), &arena(), &p, ControlCommand::STOP, 0.0).is_err());
    let mut done = rover_at(5.0, 5.0, 0.0);
    done.mode = Mode::Done;
    assert!(step(&done, &arena(), &p, ControlCommand::STOP, 0.1).is_err());
}

#[test]
fn battery_exhaustion_faults() {
    let p = RoverParams::default();
    let mut s = rover_at(5.0, 5.0, 0.0);
    s.battery_mah = 1e-6;
    let next = step(&s, &arena(), &p, ControlCommand::new(0.5, 0.0, false), 0.1).unwrap();
    assert_eq!(next.mode, Mode::Fault);
    assert_eq!(next.battery_mah, 0.0);
}

#[test]
fn rover_cannot_enter_obstacles() {
    let p = RoverParams::default();
    let w = with_circle(12.0, 10.0, 0.5);
    let mut s = rover_at(10.0, 10.0, 0.0);
    for _ in 0..100 {
        s = step(&s, &w, &p, ControlCommand::new(0.5, 0.0, false), 0.1).unwrap();
        assert!(w.obstacles[0].distance_to(s.pose.position) >= p.body_radius - 1e-9);
    }
    assert!(s.proximity);
}

#[test]
fn gps_noise_statistics() {
    let s = rover_at(5.0, 5.0, 0.0);
    assert_eq!(gps_read(&s, 0.0, &mut ChaCha8Rng::seed_from_u64(1)), Vec2::new(5.0, 5.0));
    let a: Vec<Vec2> = {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..10_000).map(|_| gps_read(&s, 0.1, &mut rng)).collect()
    };
    let b: Vec<Vec2> = {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..10_000).map(|_| gps_read(&s, 0.1, &mut rng)).collect()
    };
    assert_eq!(a, b);
    let sd = |f: &dyn Fn(&Vec2) -> f64| {
        let n = a.len() as f64;
        let mean = a.iter().map(f).sum::<f64>() / n;
        (a.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    for s in [sd(&|p| p.x), sd(&|p| p.y)] {
        assert!((s - 0.1).abs() <= 0.005, "stddev {s}");
    }
}

#[test]
fn ultrasonic_wall_geometry() {
    let p = RoverParams::default();
    let empty = ultrasonic_scan(&rover_at(10.0, 10.0, 0.0), &arena(), &p);
    assert_eq!(empty.len(), 3);
    assert!(empty.iter().all(|r| r.distance == p.ultrasonic_max_range_m));
    assert_eq!(
        empty.iter().map(|r| r.bearing).collect::<Vec<_>>(),
        p.ultrasonic_bearings
    );

    // east wall 1 m ahead; the ±0.5 rad rays meet it at 1/cos(0.5)
    let near = ultrasonic_scan(&rover_at(19.0, 10.0, 0.0), &arena(), &p);
    assert!((near[1].distance - 1.0).abs() < 1e-12);
    for side in [near[0], near[2]] {
        assert!((side.distance - 1.0 / 0.5f64.cos()).abs() < 1e-12);
    }
}

#[test]
fn spray_examples() {
    let p = RoverParams::default();
    let mut w = arena();
    w.sites = vec![site(1, 10.2, 10.0), site(2, 15.0, 15.0)];
    let mut s = rover_at(10.0, 10.0, 0.0);
    let before = s.reservoir_ml;
    assert_eq!(
        spray(&mut s, &mut w, &p, 0.1),
        SprayOutcome::Applied {
            treated: vec![SiteId(1)]
        }
    );
    assert!(!w.sites[0].active && w.sites[1].active);
    assert_eq!(s.reservoir_ml, before - p.spray_dose_ml);

    // already treated: dose still consumed, nothing listed
    assert_eq!(spray(&mut s, &mut w, &p, 0.1), SprayOutcome::Applied { treated: vec![] });
    assert_eq!(s.reservoir_ml, before - 2.0 * p.spray_dose_ml);

    s.reservoir_ml = p.spray_dose_ml / 2.0;
    assert_eq!(spray(&mut s, &mut w, &p, 0.1), SprayOutcome::Rejected);
}

#[test]
fn scenario_loading_and_errors() {
    let minimal = load_scenario("bounds 0 0 10 10\nhome 1 1\n").unwrap();
    assert!(minimal.world.sites.is_empty() && minimal.mission.waypoints.is_empty());

    let err = load_scenario("bounds 0 0 10 10\nhome 1 1\nsite 1 12 3 0.3 1\n").unwrap_err();
    assert!(err.to_string().contains("invalid scenario"), "{err}");

    let err = load_scenario("bounds 0 0 10 10\nhome 1 1\nfrobnicate 3\n").unwrap_err();
    assert!(err.to_string().starts_with("line 3"), "{err}");

    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/tcrr.scn");
    let arena = load_scenario(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(arena.world.sites.len(), 5);
    assert_eq!(arena.world.nodes.len(), 8);
}

proptest! {
    #[test]
    fn scenario_text_round_trips(
        sites in prop::collection::vec((1.0..19.0f64, 1.0..19.0f64, 0.1..0.5f64, 1u32..5), 0..6),
        nodes in prop::collection::vec((1.0..19.0f64, 1.0..19.0f64, 0.2..1.0f64), 1..6),
        circles in prop::collection::vec((1.0..19.0f64, 1.0..19.0f64, 0.1..1.0f64), 0..4),
        seed in any::<u64>(),
    ) {
        let mut text = String::from("bounds 0 0 20 20\nhome 2 2\n");
        for (i, (x, y, r, pop)) in sites.iter().enumerate() {
            text += &format!("site {} {x} {y} {r} {pop}\n", i + 1);
        }
        for (i, (x, y, r)) in nodes.iter().enumerate() {
            text += &format!("node {} {x} {y} {r}\n", i + 1);
        }
        for (x, y, r) in &circles {
            text += &format!("obstacle circle {x} {y} {r}\n");
        }
        let ids: Vec<String> = (1..=nodes.len()).map(|i| i.to_string()).collect();
        text += &format!("waypoint {}\nseed {seed}\nbom \"Part # 1\" 1.25 3\n", ids.join(" "));
        let a = load_scenario(&text).unwrap();
        let b = load_scenario(&a.to_text()).unwrap();
        prop_assert_eq!(&a.world, &b.world);
        prop_assert_eq!(&a.mission, &b.mission);
        prop_assert_eq!(a.seed, b.seed);
        prop_assert_eq!(&a.ledger, &b.ledger);
        prop_assert_eq!(a.to_text(), b.to_text());
    }
}
