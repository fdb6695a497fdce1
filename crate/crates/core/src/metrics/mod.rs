//! Detection and mission metrics.
//!
//! Average precision uses all-point interpolation: the area under the
//! monotone precision envelope of the descending-confidence PR curve.

mod cost;
mod report;

use serde::{Deserialize, Serialize};

use crate::detection::{iou, Detection, GroundTruthBox, LabelledFrame, ObjectClass};
use crate::environment::WorldMap;
use crate::geom::{wrap_angle, Pose, Vec2};

pub use cost::{cost_total, CostLedger, LineItem, Price};
pub use report::{mission_report, CostLine, CostSummary, MissionReport, ReportInputs};

pub const AP_INTERPOLATION: &str = "all-point";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("precision undefined with no predictions")]
    NoPredictions,
    #[error("no ground truth for recall or average precision")]
    NoGroundTruth,
    #[error("mAP needs at least one class")]
    NoClasses,
    #[error("pre-treatment population must be > 0")]
    ZeroPopulation,
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("total checkpoints must be > 0")]
    ZeroTotal,
    #[error("negative or malformed price {0:?}")]
    BadPrice(String),
    #[error("mission still running")]
    MissionRunning,
}

/// Greedy matching outcome.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Per detection, in input order.
    pub detection_tp: Vec<bool>,
    /// Per ground-truth box, in input order.
    pub gt_matched: Vec<bool>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.detection_tp.iter().filter(|&&t| t).count()
    }

    pub fn fp(&self) -> usize {
        self.detection_tp.len() - self.tp()
    }

    pub fn fn_count(&self) -> usize {
        self.gt_matched.iter().filter(|&&m| !m).count()
    }
}

/// Indices of `dets` by descending confidence, ties by input order.
pub(crate) fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Each detection, highest confidence first, takes the unmatched same-class
/// ground truth with the highest IoU at or above `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> MatchResult {
    let mut result = MatchResult {
        detection_tp: vec![false; dets.len()],
        gt_matched: vec![false; gts.len()],
    };
    for di in confidence_order(dets) {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if result.gt_matched[gi] || g.class != d.class {
                continue;
            }
            let overlap = iou(&d.bbox, &g.bbox);
            if overlap >= iou_threshold && best.is_none_or(|(_, b)| overlap > b) {
                best = Some((gi, overlap));
            }
        }
        if let Some((gi, _)) = best {
            result.gt_matched[gi] = true;
            result.detection_tp[di] = true;
        }
    }
    result
}

pub fn precision(tp: u64, fp: u64) -> Result<f64, MetricsError> {
    if tp + fp == 0 {
        return Err(MetricsError::NoPredictions);
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

pub fn recall(tp: u64, fn_count: u64) -> Result<f64, MetricsError> {
    if tp + fn_count == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    Ok(tp as f64 / (tp + fn_count) as f64)
}

/// Precision for curve construction, where an empty prediction set is
/// vacuously precise.
fn curve_precision(tp: u64, fp: u64) -> f64 {
    precision(tp, fp).unwrap_or(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// PR points from (confidence, is_tp) pairs. Tied confidences form one
/// threshold, so a point is emitted only after the last member of a tie.
pub fn pr_curve(scored: &[(f64, bool)], n_gt: usize) -> Result<Vec<PrPoint>, MetricsError> {
    if n_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut points = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if scored[i].1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_tie = order
            .get(k + 1)
            .is_none_or(|&j| scored[j].0 != scored[i].0);
        if last_of_tie {
            points.push(PrPoint {
                recall: tp as f64 / n_gt as f64,
                precision: curve_precision(tp, fp),
            });
        }
    }
    Ok(points)
}

/// Area under the precision envelope: Σ (r_i − r_{i−1}) · max_{j≥i} p_j.
pub fn area_under_envelope(points: &[PrPoint]) -> f64 {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (p, env) in points.iter().zip(envelope) {
        area += (p.recall - prev_recall) * env;
        prev_recall = p.recall;
    }
    area
}

/// AP for one class. Detections and ground truth of other classes are
/// ignored.
pub fn average_precision(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    class: ObjectClass,
    iou_threshold: f64,
) -> Result<f64, MetricsError> {
    let dets: Vec<Detection> = dets.iter().filter(|d| d.class == class).copied().collect();
    let gts: Vec<GroundTruthBox> = gts.iter().filter(|g| g.class == class).copied().collect();
    let m = match_detections(&dets, &gts, iou_threshold);
    let scored: Vec<(f64, bool)> = dets
        .iter()
        .zip(&m.detection_tp)
        .map(|(d, &tp)| (d.confidence, tp))
        .collect();
    Ok(area_under_envelope(&pr_curve(&scored, gts.len())?))
}

pub fn map50(per_class_ap: &[f64]) -> Result<f64, MetricsError> {
    if per_class_ap.is_empty() {
        return Err(MetricsError::NoClasses);
    }
    Ok(per_class_ap.iter().sum::<f64>() / per_class_ap.len() as f64)
}

/// Target class reduction rate in percent.
pub fn tcrr(p_pre: u64, p_post: u64) -> Result<f64, MetricsError> {
    if p_pre == 0 {
        return Err(MetricsError::ZeroPopulation);
    }
    if p_post > p_pre {
        return Err(MetricsError::InvalidCounts(format!(
            "post {p_post} exceeds pre {p_pre}"
        )));
    }
    Ok((p_pre - p_post) as f64 * 100.0 / p_pre as f64)
}

/// Checkpoint-proportion coverage in percent.
pub fn area_coverage(reached: usize, total: usize) -> Result<f64, MetricsError> {
    if total == 0 {
        return Err(MetricsError::ZeroTotal);
    }
    if reached > total {
        return Err(MetricsError::InvalidCounts(format!(
            "reached {reached} exceeds total {total}"
        )));
    }
    Ok(reached as f64 * 100.0 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ap: Vec<f64>,
    pub map50: f64,
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
}

/// Corpus-level evaluation. Precision and recall are taken at
/// `report_threshold`; AP sweeps every confidence.
pub fn evaluate_corpus(
    frames: &[LabelledFrame],
    iou_threshold: f64,
    report_threshold: f64,
) -> Result<CorpusMetrics, MetricsError> {
    let mut scored: [Vec<(f64, bool)>; 2] = [Vec::new(), Vec::new()];
    let mut n_gt = [0usize; 2];
    let (mut tp, mut fp, mut fn_count) = (0u64, 0u64, 0u64);
    for frame in frames {
        let m = match_detections(&frame.detections, &frame.ground_truth, iou_threshold);
        for (d, &is_tp) in frame.detections.iter().zip(&m.detection_tp) {
            scored[d.class.index()].push((d.confidence, is_tp));
        }
        for g in &frame.ground_truth {
            n_gt[g.class.index()] += 1;
        }
        let kept: Vec<Detection> = frame
            .detections
            .iter()
            .filter(|d| d.confidence >= report_threshold)
            .copied()
            .collect();
        let op = match_detections(&kept, &frame.ground_truth, iou_threshold);
        tp += op.tp() as u64;
        fp += op.fp() as u64;
        fn_count += op.fn_count() as u64;
    }
    let ap = ObjectClass::ALL
        .iter()
        .map(|c| {
            pr_curve(&scored[c.index()], n_gt[c.index()]).map(|pts| area_under_envelope(&pts))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(CorpusMetrics {
        precision: precision(tp, fp)?,
        recall: recall(tp, fn_count)?,
        map50: map50(&ap)?,
        ap,
        tp,
        fp,
        fn_count,
    })
}

/// Percentage of the arena swept by the camera cone or the spray disc over a
/// pose trace, rasterized at `cell` meters.
pub fn swept_area_percent(
    world: &WorldMap,
    poses: &[Pose],
    fov: f64,
    camera_range: f64,
    spray_range: f64,
    cell: f64,
) -> f64 {
    let b = world.bounds;
    let nx = (b.width() / cell).ceil().max(1.0) as usize;
    let ny = (b.height() / cell).ceil().max(1.0) as usize;
    let mut hit = vec![false; nx * ny];
    let reach = camera_range.max(spray_range);
    let half = fov / 2.0;
    for pose in poses {
        let p = pose.position;
        let ix0 = (((p.x - reach - b.min.x) / cell).floor().max(0.0)) as usize;
        let iy0 = (((p.y - reach - b.min.y) / cell).floor().max(0.0)) as usize;
        let ix1 = ((((p.x + reach - b.min.x) / cell).ceil()) as usize).min(nx);
        let iy1 = ((((p.y + reach - b.min.y) / cell).ceil()) as usize).min(ny);
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                let idx = iy * nx + ix;
                if hit[idx] {
                    continue;
                }
                let c = Vec2::new(
                    b.min.x + (ix as f64 + 0.5) * cell,
                    b.min.y + (iy as f64 + 0.5) * cell,
                );
                let d = c.distance(p);
                let in_spray = d <= spray_range;
                let in_cone = d <= camera_range
                    && wrap_angle((c - p).angle() - pose.heading).abs() <= half;
                if in_spray || in_cone {
                    hit[idx] = true;
                }
            }
        }
    }
    let covered = hit.iter().filter(|&&h| h).count();
    covered as f64 * 100.0 / (nx * ny) as f64
}
