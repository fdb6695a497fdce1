//! Line-oriented scenario documents.
//!
//! ```text
//! bounds 0 0 20 20
//! home 2 2
//! obstacle circle 10 10 1.5
//! obstacle poly 4 4 6 4 5 6
//! site 1 8 3 0.3 1
//! node 1 6 2 0.4
//! waypoint 1
//! rover max_speed=0.5 battery=3000
//! detector tp_rate=0.516 fp_per_frame=0.05
//! mission cruise=0.5 debounce=3
//! bom "Motor" 7.27 6
//! bom_total 409.39
//! seed 42
//! ```

use std::fmt::Write as _;

use crate::autonomy::{AutonomyConfig, Mission};
use crate::detection::DetectorProfile;
use crate::geom::{Circle, ConvexPolygon, Rect, Vec2};
use crate::metrics::{CostLedger, LineItem, Price};
use crate::rover::RoverParams;

use super::{BreedingSite, CheckpointNode, NodeId, Obstacle, SiteId, WorldMap};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub world: WorldMap,
    pub mission: Mission,
    pub autonomy: AutonomyConfig,
    pub rover: RoverParams,
    pub detector: DetectorProfile,
    pub seed: Option<u64>,
    pub ledger: CostLedger,
}

pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut bounds: Option<Rect> = None;
    let mut home: Option<Vec2> = None;
    let mut world = WorldMap::empty(Rect::new(0.0, 0.0, 1.0, 1.0), Vec2::ZERO);
    let mut mission = Mission::default();
    let mut autonomy = AutonomyConfig::default();
    let mut rover = RoverParams::default();
    let mut detector = DetectorProfile::default();
    let mut seed = None;
    let mut ledger = CostLedger::default();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ScenarioError::Parse { line, message };
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content
            .split_once(char::is_whitespace)
            .map(|(k, r)| (k, r.trim()))
            .unwrap_or((content, ""));
        let args: Vec<&str> = rest.split_whitespace().collect();
        match keyword {
            "bounds" => {
                let v = numbers(&args, 4).map_err(err)?;
                bounds = Some(Rect::new(v[0], v[1], v[2], v[3]));
            }
            "home" => {
                let v = numbers(&args, 2).map_err(err)?;
                home = Some(Vec2::new(v[0], v[1]));
            }
            "obstacle" => {
                let obstacle = match args.first().copied() {
                    Some("circle") => {
                        let v = numbers(&args[1..], 3).map_err(err)?;
                        Obstacle::Circle(Circle {
                            center: Vec2::new(v[0], v[1]),
                            radius: v[2],
                        })
                    }
                    Some("poly") => {
                        let coords = args[1..]
                            .iter()
                            .map(|a| number(a))
                            .collect::<Result<Vec<f64>, _>>()
                            .map_err(err)?;
                        if coords.len() % 2 != 0 {
                            return Err(err("polygon needs x y pairs".into()));
                        }
                        let vs = coords.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect();
                        Obstacle::Polygon(
                            ConvexPolygon::new(vs).map_err(|e| err(format!("polygon: {e}")))?,
                        )
                    }
                    other => {
                        return Err(err(format!(
                            "obstacle shape must be circle or poly, got {}",
                            other.unwrap_or("nothing")
                        )))
                    }
                };
                world.obstacles.push(obstacle);
            }
            "site" => {
                if args.len() != 5 {
                    return Err(err("site expects <id> <x> <y> <r> <pre_population>".into()));
                }
                let id = integer::<u32>(args[0]).map_err(err)?;
                let v = numbers(&args[1..4], 3).map_err(err)?;
                let pre = integer::<u32>(args[4]).map_err(err)?;
                world.sites.push(BreedingSite {
                    id: SiteId(id),
                    center: Vec2::new(v[0], v[1]),
                    radius: v[2],
                    pre_population: pre,
                    active: true,
                });
            }
            "node" => {
                if args.len() != 4 {
                    return Err(err("node expects <id> <x> <y> <accept_r>".into()));
                }
                let id = integer::<u32>(args[0]).map_err(err)?;
                let v = numbers(&args[1..], 3).map_err(err)?;
                world.nodes.push(CheckpointNode {
                    id: NodeId(id),
                    center: Vec2::new(v[0], v[1]),
                    acceptance_radius: v[2],
                });
            }
            "waypoint" => {
                for a in &args {
                    mission.waypoints.push(NodeId(integer::<u32>(a).map_err(err)?));
                }
                if args.is_empty() {
                    return Err(err("waypoint expects a node id".into()));
                }
            }
            "rover" => {
                for (k, v) in pairs(&args).map_err(err)? {
                    set_rover(&mut rover, k, v).map_err(err)?;
                }
            }
            "detector" => {
                for (k, v) in pairs(&args).map_err(err)? {
                    set_detector(&mut detector, k, v).map_err(err)?;
                }
            }
            "mission" => {
                for (k, v) in pairs(&args).map_err(err)? {
                    set_mission(&mut mission, &mut autonomy, k, v).map_err(err)?;
                }
            }
            "bom" => {
                let (name, tail) = quoted(rest).map_err(err)?;
                let tail: Vec<&str> = tail.split_whitespace().collect();
                let (price, qty) = match tail.as_slice() {
                    [p] => (*p, 1),
                    [p, q] => (*p, integer::<u32>(q).map_err(err)?),
                    _ => return Err(err("bom expects \"<name>\" <price> [qty]".into())),
                };
                let unit_price: Price = price.parse().map_err(|e| err(format!("{e}")))?;
                ledger.items.push(LineItem {
                    name,
                    unit_price,
                    quantity: qty,
                });
            }
            "bom_total" => {
                let [p] = args.as_slice() else {
                    return Err(err("bom_total expects one price".into()));
                };
                ledger.declared_total = Some(p.parse().map_err(|e| err(format!("{e}")))?);
            }
            "seed" => {
                let [s] = args.as_slice() else {
                    return Err(err("seed expects one integer".into()));
                };
                seed = Some(integer::<u64>(s).map_err(err)?);
            }
            other => return Err(err(format!("unknown statement '{other}'"))),
        }
    }

    let invalid = ScenarioError::Validation;
    world.bounds = bounds.ok_or_else(|| invalid("missing bounds statement".into()))?;
    world.home = home.ok_or_else(|| invalid("missing home statement".into()))?;
    mission.home = world.home;
    world.validate().map_err(invalid)?;
    mission.validate(&world).map_err(invalid)?;
    autonomy.validate().map_err(invalid)?;
    rover.validate().map_err(invalid)?;
    detector.validate().map_err(invalid)?;
    Ok(Scenario {
        world,
        mission,
        autonomy,
        rover,
        detector,
        seed,
        ledger,
    })
}

impl Scenario {
    /// Canonical text form; `load_scenario(s.to_text())` reproduces `s`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = &self.world;
        let _ = writeln!(
            s,
            "bounds {} {} {} {}",
            w.bounds.min.x, w.bounds.min.y, w.bounds.max.x, w.bounds.max.y
        );
        let _ = writeln!(s, "home {} {}", w.home.x, w.home.y);
        for o in &w.obstacles {
            match o {
                Obstacle::Circle(c) => {
                    let _ = writeln!(s, "obstacle circle {} {} {}", c.center.x, c.center.y, c.radius);
                }
                Obstacle::Polygon(p) => {
                    s.push_str("obstacle poly");
                    for v in p.vertices() {
                        let _ = write!(s, " {} {}", v.x, v.y);
                    }
                    s.push('\n');
                }
            }
        }
        for site in &w.sites {
            let _ = writeln!(
                s,
                "site {} {} {} {} {}",
                site.id, site.center.x, site.center.y, site.radius, site.pre_population
            );
        }
        for n in &w.nodes {
            let _ = writeln!(s, "node {} {} {} {}", n.id, n.center.x, n.center.y, n.acceptance_radius);
        }
        for id in &self.mission.waypoints {
            let _ = writeln!(s, "waypoint {id}");
        }
        let r = &self.rover;
        let bearings: Vec<String> = r.ultrasonic_bearings.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(
            s,
            "rover max_speed={} max_turn_rate={} wheelbase={} body_radius={} battery={} drive_draw={} idle_draw={}",
            r.max_speed, r.max_turn_rate, r.wheelbase, r.body_radius, r.battery_capacity_mah, r.drive_draw_ma, r.idle_draw_ma
        );
        let _ = writeln!(
            s,
            "rover spray_draw={} reservoir={} dose={} spray_range={} gps_sigma={} ultrasonic_range={} ultrasonic_bearings={}",
            r.spray_draw_ma, r.reservoir_capacity_ml, r.spray_dose_ml, r.spray_range_m, r.gps_sigma_m, r.ultrasonic_max_range_m, bearings.join(",")
        );
        let d = &self.detector;
        let _ = writeln!(
            s,
            "detector tp_rate_mosquito={} tp_rate_site={} fp_per_frame={} tp_conf_min={} tp_conf_max={} fp_conf_min={} fp_conf_max={}",
            d.tp_rate[0], d.tp_rate[1], d.fp_per_frame, d.tp_confidence.0, d.tp_confidence.1, d.fp_confidence.0, d.fp_confidence.1
        );
        let _ = writeln!(
            s,
            "detector jitter={} width={} height={} fov={} range={} focal={} report_threshold={}",
            d.jitter_px, d.frame_width, d.frame_height, d.fov, d.range, d.focal_px, d.report_threshold
        );
        let m = &self.mission;
        let a = &self.autonomy;
        let _ = writeln!(
            s,
            "mission treat_on_detect={} confidence={} home_radius={} cruise={} lookahead={} avoid={} forward_cone={}",
            m.treat_on_detect, m.detect_confidence_threshold, m.home_radius, a.cruise_speed, a.lookahead, a.avoid_threshold, a.forward_cone
        );
        let _ = writeln!(
            s,
            "mission inflation={} debounce={} deadman={} inspect_timeout={} treat_timeout={} cooldown={} leg_slack={}",
            a.inflation, a.debounce_ticks, a.deadman_s, a.inspect_timeout_s, a.treat_timeout_s, a.engage_cooldown_s, a.leg_slack_s
        );
        for item in &self.ledger.items {
            let _ = writeln!(s, "bom \"{}\" {} {}", item.name, item.unit_price.exact(), item.quantity);
        }
        if let Some(t) = self.ledger.declared_total {
            let _ = writeln!(s, "bom_total {}", t.exact());
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed {seed}");
        }
        s
    }
}

fn strip_comment(line: &str) -> &str {
    // a '#' inside a quoted bom name is literal
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("expected a number, got '{s}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("expected a finite number, got '{s}'"))
    }
}

fn numbers(args: &[&str], n: usize) -> Result<Vec<f64>, String> {
    if args.len() != n {
        return Err(format!("expected {n} numbers, got {}", args.len()));
    }
    args.iter().map(|a| number(a)).collect()
}

fn integer<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, got '{s}'"))
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn pairs<'a>(args: &[&'a str]) -> Result<Vec<(&'a str, &'a str)>, String> {
    if args.is_empty() {
        return Err("expected key=value settings".into());
    }
    args.iter()
        .map(|a| a.split_once('=').ok_or_else(|| format!("expected key=value, got '{a}'")))
        .collect()
}

fn quoted(rest: &str) -> Result<(String, &str), String> {
    let body = rest
        .strip_prefix('"')
        .ok_or_else(|| "bom name must be double-quoted".to_string())?;
    let end = body.find('"').ok_or_else(|| "unterminated bom name".to_string())?;
    let name = &body[..end];
    if name.is_empty() {
        return Err("bom name is empty".into());
    }
    Ok((name.to_string(), &body[end + 1..]))
}

fn set_rover(r: &mut RoverParams, key: &str, value: &str) -> Result<(), String> {
    if key == "ultrasonic_bearings" {
        r.ultrasonic_bearings = value.split(',').map(number).collect::<Result<_, _>>()?;
        return Ok(());
    }
    let v = number(value)?;
    let slot = match key {
        "max_speed" => &mut r.max_speed,
        "max_turn_rate" => &mut r.max_turn_rate,
        "wheelbase" => &mut r.wheelbase,
        "body_radius" => &mut r.body_radius,
        "battery" => &mut r.battery_capacity_mah,
        "drive_draw" => &mut r.drive_draw_ma,
        "idle_draw" => &mut r.idle_draw_ma,
        "spray_draw" => &mut r.spray_draw_ma,
        "reservoir" => &mut r.reservoir_capacity_ml,
        "dose" => &mut r.spray_dose_ml,
        "spray_range" => &mut r.spray_range_m,
        "gps_sigma" => &mut r.gps_sigma_m,
        "ultrasonic_range" => &mut r.ultrasonic_max_range_m,
        _ => return Err(format!("unknown rover key '{key}'")),
    };
    *slot = v;
    Ok(())
}

fn set_detector(d: &mut DetectorProfile, key: &str, value: &str) -> Result<(), String> {
    let v = number(value)?;
    let slot = match key {
        "tp_rate" => {
            d.tp_rate = [v, v];
            return Ok(());
        }
        "tp_rate_mosquito" => &mut d.tp_rate[0],
        "tp_rate_site" => &mut d.tp_rate[1],
        "fp_per_frame" => &mut d.fp_per_frame,
        "tp_conf_min" => &mut d.tp_confidence.0,
        "tp_conf_max" => &mut d.tp_confidence.1,
        "fp_conf_min" => &mut d.fp_confidence.0,
        "fp_conf_max" => &mut d.fp_confidence.1,
        "jitter" => &mut d.jitter_px,
        "width" => &mut d.frame_width,
        "height" => &mut d.frame_height,
        "fov" => &mut d.fov,
        "range" => &mut d.range,
        "focal" => &mut d.focal_px,
        "report_threshold" => &mut d.report_threshold,
        _ => return Err(format!("unknown detector key '{key}'")),
    };
    *slot = v;
    Ok(())
}

fn set_mission(
    m: &mut Mission,
    a: &mut AutonomyConfig,
    key: &str,
    value: &str,
) -> Result<(), String> {
    match key {
        "treat_on_detect" => m.treat_on_detect = boolean(value)?,
        "debounce" => a.debounce_ticks = integer(value)?,
        _ => {
            let v = number(value)?;
            let slot = match key {
                "confidence" => &mut m.detect_confidence_threshold,
                "home_radius" => &mut m.home_radius,
                "cruise" => &mut a.cruise_speed,
                "lookahead" => &mut a.lookahead,
                "avoid" => &mut a.avoid_threshold,
                "forward_cone" => &mut a.forward_cone,
                "inflation" => &mut a.inflation,
                "deadman" => &mut a.deadman_s,
                "inspect_timeout" => &mut a.inspect_timeout_s,
                "treat_timeout" => &mut a.treat_timeout_s,
                "cooldown" => &mut a.engage_cooldown_s,
                "leg_slack" => &mut a.leg_slack_s,
                _ => return Err(format!("unknown mission key '{key}'")),
            };
            *slot = v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_is_empty_world() {
        let s = load_scenario("bounds 0 0 10 10\nhome 1 1\n").unwrap();
        assert!(s.world.obstacles.is_empty() && s.world.sites.is_empty() && s.world.nodes.is_empty());
        assert!(s.mission.waypoints.is_empty());
        assert_eq!(s.mission.home, Vec2::new(1.0, 1.0));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let e = load_scenario("bounds 0 0 10 10\n# ok\nhome 1 x\n").unwrap_err();
        assert!(matches!(e, ScenarioError::Parse { line: 3, .. }), "{e}");
        let e = load_scenario("bounds 0 0 10 10\nhome 1 1\nteleport 3\n").unwrap_err();
        assert!(e.to_string().starts_with("line 3:"));
    }

    #[test]
    fn out_of_bounds_site_is_rejected() {
        let e = load_scenario("bounds 0 0 10 10\nhome 1 1\nsite 1 12 5 0.3 1\n").unwrap_err();
        assert_eq!(e, ScenarioError::Validation("site 1 lies outside bounds".into()));
    }

    #[test]
    fn unknown_waypoint_is_rejected() {
        let e = load_scenario("bounds 0 0 10 10\nhome 1 1\nnode 1 5 5 0.3\nwaypoint 2\n").unwrap_err();
        assert!(e.to_string().contains("unknown node 2"));
    }

    #[test]
    fn bom_lines_and_inline_comments() {
        let s = load_scenario(
            "bounds 0 0 10 10\nhome 1 1\nbom \"Motor #1\" 7.27 6 # six of them\nbom \"Pi\" 61.00\nbom_total 104.62\n",
        )
        .unwrap();
        assert_eq!(s.ledger.items.len(), 2);
        assert_eq!(s.ledger.items[0].name, "Motor #1");
        assert_eq!(s.ledger.items[1].quantity, 1);
        assert_eq!(s.ledger.total().to_string(), "104.62");
        assert_eq!(s.ledger.discrepancy(), Some(Price::default()));
    }

    #[test]
    fn keyed_settings_apply() {
        let s = load_scenario(
            "bounds 0 0 10 10\nhome 1 1\nrover max_speed=1.0 battery=2500 ultrasonic_bearings=-0.4,0,0.4\n\
             detector tp_rate=0.516 fp_per_frame=0.05\nmission debounce=5 treat_on_detect=false\nseed 7\n",
        )
        .unwrap();
        assert_eq!(s.rover.max_speed, 1.0);
        assert_eq!(s.rover.battery_capacity_mah, 2500.0);
        assert_eq!(s.rover.ultrasonic_bearings, vec![-0.4, 0.0, 0.4]);
        assert_eq!(s.detector.tp_rate, [0.516, 0.516]);
        assert_eq!(s.autonomy.debounce_ticks, 5);
        assert!(!s.mission.treat_on_detect);
        assert_eq!(s.seed, Some(7));
        let e = load_scenario("bounds 0 0 10 10\nhome 1 1\nrover warp=9\n").unwrap_err();
        assert!(e.to_string().contains("warp"));
    }

    #[test]
    fn text_round_trip_is_fixed_point() {
        let src = "bounds 0 0 20 20\nhome 2 2\nobstacle circle 10 10 1.5\nobstacle poly 4 8 6 8 5 9.5\n\
                   site 1 8 3 0.3 1\nnode 1 6 2 0.4\nnode 2 6 12 0.4\nwaypoint 1\nwaypoint 2\n\
                   bom \"Motor\" 7.27 6\nbom \"Glue\" 0.125\nbom_total 43.75\nseed 42\n";
        let a = load_scenario(src).unwrap();
        let text = a.to_text();
        let b = load_scenario(&text).unwrap();
        assert_eq!(a, b);
        assert_eq!(text, b.to_text());
    }
}
