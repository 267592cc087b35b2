//! Arm-similarity and EE-tracking metrics, per-trajectory aggregation and
//! the challenging-subset split.
//!
//! Errors are sums of squares as defined; `_rms` fields take the square root
//! of each step before averaging. Aggregates are means of per-trajectory
//! means, with the per-step pooled mean reported alongside.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::liegroup::{geodesic_angle, UnitQuaternion};

pub const DEFAULT_ALPHA: f64 = 1e-9;
pub const DEFAULT_CHALLENGING_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("streams do not match: {0}")]
    MismatchedStreams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Keypoints of one arm configuration, all in one base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSnapshot {
    pub shoulder: Vector3<f64>,
    pub elbow: Vector3<f64>,
    pub wrist: Vector3<f64>,
    pub ee: Vector3<f64>,
    pub ee_rotation: UnitQuaternion,
}

impl StepSnapshot {
    fn segments(&self) -> [Vector3<f64>; 3] {
        [
            self.elbow - self.shoulder,
            self.wrist - self.elbow,
            self.ee - self.wrist,
        ]
    }
}

/// Sum of squared elbow, wrist and EE position errors (m²).
pub fn keypoint_position_error(reference: &StepSnapshot, solved: &StepSnapshot) -> f64 {
    (reference.elbow - solved.elbow).norm_squared()
        + (reference.wrist - solved.wrist).norm_squared()
        + (reference.ee - solved.ee).norm_squared()
}

/// Sum of angles between corresponding upper-arm, forearm and hand segments.
pub fn line_angle_error(reference: &StepSnapshot, solved: &StepSnapshot, alpha: f64) -> f64 {
    reference
        .segments()
        .iter()
        .zip(solved.segments().iter())
        .map(|(a, b)| {
            let c = a.dot(b) / (a.norm() * b.norm() + alpha);
            c.clamp(-1.0, 1.0).acos()
        })
        .sum()
}

/// Squared EE position error (m²).
pub fn ee_position_error(reference: &StepSnapshot, solved: &StepSnapshot) -> f64 {
    (reference.ee - solved.ee).norm_squared()
}

/// Squared geodesic EE orientation error (rad²).
pub fn ee_orientation_error(reference: &StepSnapshot, solved: &StepSnapshot) -> f64 {
    geodesic_angle(&reference.ee_rotation, &solved.ee_rotation).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub kp_pos_err_sq: f64,
    pub line_angle_err: f64,
    pub ee_pos_err_sq: f64,
    pub ee_ori_err_sq: f64,
}

impl StepMetrics {
    pub fn compute(reference: &StepSnapshot, solved: &StepSnapshot, alpha: f64) -> Self {
        Self {
            kp_pos_err_sq: keypoint_position_error(reference, solved),
            line_angle_err: line_angle_error(reference, solved, alpha),
            ee_pos_err_sq: ee_position_error(reference, solved),
            ee_ori_err_sq: ee_orientation_error(reference, solved),
        }
    }

    /// Values in [`MetricValues`] order.
    fn values(&self) -> [f64; METRIC_COUNT] {
        [
            self.kp_pos_err_sq,
            self.kp_pos_err_sq.sqrt(),
            self.line_angle_err,
            self.ee_pos_err_sq,
            self.ee_pos_err_sq.sqrt(),
            self.ee_ori_err_sq,
            self.ee_ori_err_sq.sqrt(),
        ]
    }
}

const METRIC_COUNT: usize = 7;

/// One value per reported metric.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricValues {
    pub kp_pos_err_sq: f64,
    pub kp_pos_err_rms: f64,
    pub line_angle_err: f64,
    pub ee_pos_err_sq: f64,
    pub ee_pos_err_rms: f64,
    pub ee_ori_err_sq: f64,
    pub ee_ori_err_rms: f64,
}

impl MetricValues {
    fn from_array(v: [f64; METRIC_COUNT]) -> Self {
        Self {
            kp_pos_err_sq: v[0],
            kp_pos_err_rms: v[1],
            line_angle_err: v[2],
            ee_pos_err_sq: v[3],
            ee_pos_err_rms: v[4],
            ee_ori_err_sq: v[5],
            ee_ori_err_rms: v[6],
        }
    }

    fn to_array(self) -> [f64; METRIC_COUNT] {
        [
            self.kp_pos_err_sq,
            self.kp_pos_err_rms,
            self.line_angle_err,
            self.ee_pos_err_sq,
            self.ee_pos_err_rms,
            self.ee_ori_err_sq,
            self.ee_ori_err_rms,
        ]
    }

    /// `1 - self / baseline` per metric; zero where the baseline is zero.
    pub fn reduction_from(&self, baseline: &MetricValues) -> MetricValues {
        let (a, b) = (self.to_array(), baseline.to_array());
        MetricValues::from_array(std::array::from_fn(|i| {
            if b[i] == 0.0 {
                0.0
            } else {
                1.0 - a[i] / b[i]
            }
        }))
    }
}

/// Per-step metrics of one solver variant on one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub id: String,
    pub steps: Vec<StepMetrics>,
}

impl TrajectoryMetrics {
    pub fn mean(&self) -> MetricValues {
        let mut sum = [0.0; METRIC_COUNT];
        for s in &self.steps {
            for (acc, v) in sum.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
        let n = self.steps.len().max(1) as f64;
        MetricValues::from_array(sum.map(|v| v / n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub n_traj: usize,
    pub n_steps: usize,
    /// Mean of per-trajectory means.
    pub mean: MetricValues,
    /// Sample standard deviation of per-trajectory means.
    pub std: MetricValues,
    /// Mean over all steps.
    pub pooled_mean: MetricValues,
}

fn summarize(trajs: &[&TrajectoryMetrics]) -> Summary {
    let means: Vec<[f64; METRIC_COUNT]> = trajs.iter().map(|t| t.mean().to_array()).collect();
    let n = means.len();
    let mean: [f64; METRIC_COUNT] = std::array::from_fn(|i| {
        if n == 0 {
            0.0
        } else {
            means.iter().map(|m| m[i]).sum::<f64>() / n as f64
        }
    });
    let std = std::array::from_fn(|i| {
        if n < 2 {
            0.0
        } else {
            let var = means.iter().map(|m| (m[i] - mean[i]).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt()
        }
    });
    let n_steps: usize = trajs.iter().map(|t| t.steps.len()).sum();
    let mut pooled = [0.0; METRIC_COUNT];
    for t in trajs {
        for s in &t.steps {
            for (acc, v) in pooled.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
    }
    Summary {
        n_traj: n,
        n_steps,
        mean: MetricValues::from_array(mean),
        std: MetricValues::from_array(std),
        pooled_mean: MetricValues::from_array(pooled.map(|v| v / n_steps.max(1) as f64)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub full: Summary,
    pub challenging: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub traj_id: String,
    pub variant: &'static str,
    pub n_steps: usize,
    pub challenging: bool,
    #[serde(flatten)]
    pub mean: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub alpha: f64,
    pub challenging_fraction: f64,
    pub challenging_ids: Vec<String>,
    pub baseline: VariantSummary,
    pub hlik: VariantSummary,
    /// `1 - hlik / baseline` on the per-trajectory-first means.
    pub reduction_full: MetricValues,
    pub reduction_challenging: MetricValues,
    #[serde(skip)]
    pub rows: Vec<TrajectoryRow>,
}

/// Number of trajectories in the challenging subset: `round(fraction * n)`,
/// at least one when `n > 0`.
pub fn challenging_count(n: usize, fraction: f64) -> usize {
    if n == 0 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n)
}

/// Ids of the trajectories with the largest baseline mean keypoint error;
/// ties go to the smaller id.
pub fn challenging_subset(baseline: &[TrajectoryMetrics], fraction: f64) -> Vec<String> {
    let mut ranked: Vec<(f64, &str)> = baseline
        .iter()
        .map(|t| (t.mean().kp_pos_err_sq, t.id.as_str()))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let mut ids: Vec<String> = ranked
        .into_iter()
        .take(challenging_count(baseline.len(), fraction))
        .map(|(_, id)| id.to_string())
        .collect();
    ids.sort();
    ids
}

/// Full-set and challenging-subset summaries for both variants. Trajectories
/// are matched by id and processed in id order, so the result does not
/// depend on input order.
pub fn aggregate(
    baseline: &[TrajectoryMetrics],
    hlik: &[TrajectoryMetrics],
    fraction: f64,
    alpha: f64,
) -> Result<MetricsReport, MetricsError> {
    if baseline.len() != hlik.len() {
        return Err(MetricsError::MismatchedStreams(format!(
            "{} baseline trajectories vs {} HL-IK trajectories",
            baseline.len(),
            hlik.len()
        )));
    }
    let mut base: Vec<&TrajectoryMetrics> = baseline.iter().collect();
    let mut ours: Vec<&TrajectoryMetrics> = hlik.iter().collect();
    base.sort_by(|a, b| a.id.cmp(&b.id));
    ours.sort_by(|a, b| a.id.cmp(&b.id));
    for w in base.windows(2) {
        if w[0].id == w[1].id {
            return Err(MetricsError::MismatchedStreams(format!("duplicate id `{}`", w[0].id)));
        }
    }
    for (b, h) in base.iter().zip(&ours) {
        if b.id != h.id {
            return Err(MetricsError::MismatchedStreams(format!(
                "trajectory `{}` has no counterpart `{}`",
                b.id, h.id
            )));
        }
        if b.steps.len() != h.steps.len() {
            return Err(MetricsError::MismatchedStreams(format!(
                "trajectory `{}`: {} baseline steps vs {} HL-IK steps",
                b.id,
                b.steps.len(),
                h.steps.len()
            )));
        }
    }
    let sorted: Vec<TrajectoryMetrics> = base.iter().map(|t| (*t).clone()).collect();
    let ids = challenging_subset(&sorted, fraction);
    let is_hard = |id: &str| ids.binary_search_by(|x| x.as_str().cmp(id)).is_ok();
    let variant = |v: &[&TrajectoryMetrics]| {
        let hard: Vec<&TrajectoryMetrics> = v.iter().copied().filter(|t| is_hard(&t.id)).collect();
        VariantSummary {
            full: summarize(v),
            challenging: summarize(&hard),
        }
    };
    let baseline_summary = variant(&base);
    let hlik_summary = variant(&ours);
    let mut rows = Vec::with_capacity(2 * base.len());
    for (name, v) in [("baseline", &base), ("hlik", &ours)] {
        for t in v.iter() {
            rows.push(TrajectoryRow {
                traj_id: t.id.clone(),
                variant: name,
                n_steps: t.steps.len(),
                challenging: is_hard(&t.id),
                mean: t.mean(),
            });
        }
    }
    Ok(MetricsReport {
        alpha,
        challenging_fraction: fraction,
        reduction_full: hlik_summary.full.mean.reduction_from(&baseline_summary.full.mean),
        reduction_challenging: hlik_summary
            .challenging
            .mean
            .reduction_from(&baseline_summary.challenging.mean),
        challenging_ids: ids,
        baseline: baseline_summary,
        hlik: hlik_summary,
        rows,
    })
}

impl MetricsReport {
    pub fn write_json(&self, w: impl Write) -> Result<(), MetricsError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per trajectory and variant.
    pub fn write_csv(&self, w: impl Write) -> Result<(), MetricsError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "traj_id",
            "variant",
            "n_steps",
            "kp_pos_err_sq",
            "kp_pos_err_rms",
            "line_angle_err",
            "ee_pos_err_sq",
            "ee_pos_err_rms",
            "ee_ori_err_sq",
            "ee_ori_err_rms",
            "challenging",
        ])
        .map_err(std::io::Error::from)?;
        for r in &self.rows {
            let m = r.mean;
            let mut rec = vec![r.traj_id.clone(), r.variant.to_string(), r.n_steps.to_string()];
            rec.extend(m.to_array().iter().map(|v| v.to_string()));
            rec.push(r.challenging.to_string());
            out.write_record(&rec).map_err(std::io::Error::from)?;
        }
        out.flush()?;
        Ok(())
    }
}
