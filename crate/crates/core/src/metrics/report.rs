//! Mission report assembly and rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{area_coverage, cost::CostLedger, swept_area_percent, tcrr, MetricsError, AP_INTERPOLATION};
use crate::autonomy::{FsmState, MissionStatus};
use crate::environment::{NodeId, SiteId, WorldMap};
use crate::event::TimedEvent;
use crate::geom::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub name: String,
    pub unit_price: String,
    pub quantity: u32,
    pub total: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub lines: Vec<CostLine>,
    pub total: String,
    pub declared_total: Option<String>,
}

impl CostSummary {
    pub fn from_ledger(ledger: &CostLedger) -> Self {
        Self {
            lines: ledger
                .items
                .iter()
                .map(|i| CostLine {
                    name: i.name.clone(),
                    unit_price: i.unit_price.to_string(),
                    quantity: i.quantity,
                    total: i.total().to_string(),
                })
                .collect(),
            total: ledger.total().to_string(),
            declared_total: ledger.declared_total.map(|p| p.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub ap_interpolation: String,
    pub outcome: FsmState,
    pub tcrr_percent: f64,
    pub area_coverage_percent: f64,
    /// Diagnostic: union of camera and spray footprints over arena area.
    pub swept_area_percent: f64,
    pub mission_time_s: f64,
    pub battery_used_mah: f64,
    pub sites_pre: u64,
    pub sites_post: u64,
    pub sites_treated: Vec<SiteId>,
    pub nodes_reached: usize,
    pub nodes_total: usize,
    pub nodes_reached_ids: Vec<NodeId>,
    pub nodes_skipped_ids: Vec<NodeId>,
    pub events: Vec<TimedEvent>,
    pub cost: Option<CostSummary>,
}

pub struct ReportInputs<'a> {
    pub status: &'a MissionStatus,
    /// World as it stands at mission end (site activity reflects treatment).
    pub world: &'a WorldMap,
    pub waypoint_count: usize,
    pub battery_capacity_mah: f64,
    pub final_battery_mah: f64,
    pub events: &'a [TimedEvent],
    pub poses: &'a [Pose],
    pub camera_fov: f64,
    pub camera_range: f64,
    pub spray_range: f64,
    pub ledger: Option<&'a CostLedger>,
}

pub fn mission_report(inputs: ReportInputs<'_>) -> Result<MissionReport, MetricsError> {
    let status = inputs.status;
    if !matches!(status.fsm_state, FsmState::Done | FsmState::Fault) {
        return Err(MetricsError::MissionRunning);
    }
    let world = inputs.world;
    let sites_pre = world.population_pre();
    let sites_post = world.population_post();
    let tcrr_percent = if sites_pre == 0 {
        0.0
    } else {
        tcrr(sites_pre, sites_post)?
    };
    let area_coverage_percent = if inputs.waypoint_count == 0 {
        0.0
    } else {
        area_coverage(status.nodes_reached.len(), inputs.waypoint_count)?
    };
    let end = status.end_clock_s.unwrap_or(status.start_clock_s);
    Ok(MissionReport {
        ap_interpolation: AP_INTERPOLATION.to_string(),
        outcome: status.fsm_state,
        tcrr_percent,
        area_coverage_percent,
        swept_area_percent: swept_area_percent(
            world,
            inputs.poses,
            inputs.camera_fov,
            inputs.camera_range,
            inputs.spray_range,
            0.1,
        ),
        mission_time_s: end - status.start_clock_s,
        battery_used_mah: inputs.battery_capacity_mah - inputs.final_battery_mah,
        sites_pre,
        sites_post,
        sites_treated: status.sites_treated.iter().copied().collect(),
        nodes_reached: status.nodes_reached.len(),
        nodes_total: inputs.waypoint_count,
        nodes_reached_ids: status.nodes_reached.clone(),
        nodes_skipped_ids: status.nodes_skipped.clone(),
        events: inputs.events.to_vec(),
        cost: inputs.ledger.filter(|l| !l.is_empty()).map(CostSummary::from_ledger),
    })
}

fn ids<T: std::fmt::Display>(v: &[T]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl MissionReport {
    /// Operator-facing summary table.
    pub fn render_human(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Mission report (AP interpolation: {})", self.ap_interpolation);
        let _ = writeln!(s, "Outcome {}", self.outcome.name());
        let _ = writeln!(s, "TCRR {:.1}%", self.tcrr_percent);
        let _ = writeln!(s, "Coverage {:.1}%", self.area_coverage_percent);
        let _ = writeln!(s, "Swept area {:.1}%", self.swept_area_percent);
        let _ = writeln!(
            s,
            "Mission time {:.1} s ({}m {:02}s)",
            self.mission_time_s,
            (self.mission_time_s / 60.0).floor() as u64,
            (self.mission_time_s % 60.0).floor() as u64
        );
        let _ = writeln!(s, "Battery used {:.1} mAh", self.battery_used_mah);
        let _ = writeln!(
            s,
            "Sites treated {}/{} ({})",
            self.sites_pre - self.sites_post,
            self.sites_pre,
            ids(&self.sites_treated)
        );
        let _ = writeln!(
            s,
            "Nodes reached {}/{} ({})",
            self.nodes_reached,
            self.nodes_total,
            ids(&self.nodes_reached_ids)
        );
        if !self.nodes_skipped_ids.is_empty() {
            let _ = writeln!(s, "Nodes skipped {}", ids(&self.nodes_skipped_ids));
        }
        let _ = writeln!(s, "Events {}", self.events.len());
        if let Some(cost) = &self.cost {
            let _ = writeln!(s, "Cost ledger");
            let width = cost.lines.iter().map(|l| l.name.len()).max().unwrap_or(0);
            for l in &cost.lines {
                if l.quantity == 1 {
                    let _ = writeln!(s, "  {:<width$}  {}", l.name, l.total);
                } else {
                    let _ = writeln!(
                        s,
                        "  {:<width$}  {} * {} = {}",
                        l.name, l.quantity, l.unit_price, l.total
                    );
                }
            }
            let _ = writeln!(s, "Total {}", cost.total);
            if let Some(declared) = &cost.declared_total {
                if declared != &cost.total {
                    let _ = writeln!(s, "Declared total {declared} differs from computed total");
                }
            }
        }
        s
    }

    /// Line-oriented `key value` form.
    pub fn render_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ap_interpolation {}", self.ap_interpolation);
        let _ = writeln!(s, "outcome {}", self.outcome.name());
        let _ = writeln!(s, "tcrr_percent {}", self.tcrr_percent);
        let _ = writeln!(s, "area_coverage_percent {}", self.area_coverage_percent);
        let _ = writeln!(s, "swept_area_percent {}", self.swept_area_percent);
        let _ = writeln!(s, "mission_time_s {}", self.mission_time_s);
        let _ = writeln!(s, "battery_used_mah {}", self.battery_used_mah);
        let _ = writeln!(s, "sites_pre {}", self.sites_pre);
        let _ = writeln!(s, "sites_post {}", self.sites_post);
        let _ = writeln!(s, "sites_treated {}", ids(&self.sites_treated));
        let _ = writeln!(s, "nodes_reached {}", self.nodes_reached);
        let _ = writeln!(s, "nodes_total {}", self.nodes_total);
        let _ = writeln!(s, "nodes_reached_ids {}", ids(&self.nodes_reached_ids));
        let _ = writeln!(s, "nodes_skipped_ids {}", ids(&self.nodes_skipped_ids));
        let _ = writeln!(s, "event_count {}", self.events.len());
        if let Some(cost) = &self.cost {
            let _ = writeln!(s, "cost_total {}", cost.total);
            if let Some(d) = &cost.declared_total {
                let _ = writeln!(s, "cost_declared_total {d}");
            }
        }
        for e in &self.events {
            let _ = writeln!(
                s,
                "event {:.1} {}",
                e.clock_s,
                serde_json::to_string(&e.event).unwrap_or_default()
            );
        }
        s
    }

    /// Machine-readable JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
