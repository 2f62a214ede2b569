//! End-to-end calibration: tracking, reference selection, initialization and
//! continuous-time bundle adjustment.

use crate::geometry::{project, project_with_jacobian, skew, CameraIntrinsics, Rotation};
use crate::init::{
    fit_spline_segment, hand_eye_init, segment_poses, solve_pnp, HandEyeConfig, InitError, SpatiotemporalParams,
    TimedPose, DEFAULT_MIN_RUN_LENGTH, DEFAULT_SEGMENT_GAP,
};
use crate::solver::{
    rotation_from_slice, BlockId, CostFunction, HuberLoss, Manifold, Problem, SolverError, SolverOptions,
    SolverReport, Termination,
};
use crate::spline::{
    local_angular_velocity, local_position, local_rotation_with_jacobians, local_velocity, locate_knot,
    position_weights, PiecewiseTrajectory, PositionSpline, RotationSpline, TrajectorySegment, DEFAULT_KNOT_SPACING,
    SUPPORT,
};
use crate::tracking::{
    select_reference, track_incomplete, BoardSpec, CameraId, EllipseFrame, GridPattern, PatternTrack,
    TrackingConfig, TrackingStats,
};
use nalgebra::{DMatrix, Matrix2x3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Huber threshold for reprojection residuals, pixels.
pub const DEFAULT_HUBER_DELTA: f64 = 1.0;
/// Half-width of the time-offset box during bundle adjustment, seconds.
pub const DEFAULT_BA_OFFSET_MARGIN: f64 = 0.01;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.02;
pub const HISTOGRAM_RANGE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Input,
    Tracking,
    ReferenceSelection,
    Pnp,
    Segmentation,
    SplineFit,
    HandEye,
    BundleAdjustment,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Input => "input",
            Stage::Tracking => "tracking",
            Stage::ReferenceSelection => "reference-selection",
            Stage::Pnp => "pnp",
            Stage::Segmentation => "segmentation",
            Stage::SplineFit => "spline-fit",
            Stage::HandEye => "hand-eye",
            Stage::BundleAdjustment => "bundle-adjustment",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage failed: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    fn new(stage: Stage, message: impl fmt::Display) -> Self {
        Self {
            stage,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tracking: TrackingConfig,
    pub segment_gap: f64,
    pub min_run_length: usize,
    pub knot_spacing: f64,
    pub hand_eye: HandEyeConfig,
    pub huber_delta: f64,
    pub ba_offset_margin: f64,
    pub solver: SolverOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tracking: TrackingConfig::default(),
            segment_gap: DEFAULT_SEGMENT_GAP,
            min_run_length: DEFAULT_MIN_RUN_LENGTH,
            knot_spacing: DEFAULT_KNOT_SPACING,
            hand_eye: HandEyeConfig::default(),
            huber_delta: DEFAULT_HUBER_DELTA,
            ba_offset_margin: DEFAULT_BA_OFFSET_MARGIN,
            solver: SolverOptions::default(),
        }
    }
}

impl PipelineConfig {
    /// Checks every tunable against the precondition of the stage that uses it.
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be positive and finite, got {v}"))
            }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} must be non-negative and finite, got {v}"))
            }
        };
        positive("tracking.association_threshold", self.tracking.association_threshold)?;
        if self.tracking.min_points == Some(0) {
            return Err("tracking.min_points must be at least 1".into());
        }
        if self.tracking.max_traversal_offset < 2 {
            return Err(format!(
                "tracking.max_traversal_offset must be at least 2, got {}",
                self.tracking.max_traversal_offset
            ));
        }
        positive("segmentation.gap", self.segment_gap)?;
        if self.min_run_length == 0 {
            return Err("segmentation.min_run_length must be at least 1".into());
        }
        positive("spline.knot_spacing", self.knot_spacing)?;
        positive("hand_eye.offset_bound", self.hand_eye.offset_bound)?;
        positive("hand_eye.grid_step", self.hand_eye.grid_step)?;
        if self.hand_eye.grid_step > self.hand_eye.offset_bound {
            return Err("hand_eye.grid_step must not exceed hand_eye.offset_bound".into());
        }
        positive("bundle_adjustment.huber_delta", self.huber_delta)?;
        positive("bundle_adjustment.offset_margin", self.ba_offset_margin)?;
        let s = &self.solver;
        if s.max_iterations == 0 {
            return Err("solver.max_iterations must be at least 1".into());
        }
        non_negative("solver.function_tolerance", s.function_tolerance)?;
        non_negative("solver.gradient_tolerance", s.gradient_tolerance)?;
        non_negative("solver.parameter_tolerance", s.parameter_tolerance)?;
        positive("solver.initial_damping", s.initial_damping)?;
        positive("solver.max_damping", s.max_damping)?;
        positive("solver.fd_relative_step", s.fd_relative_step)?;
        positive("solver.fd_min_step", s.fd_min_step)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraInput {
    pub intrinsics: CameraIntrinsics,
    /// Complete patterns from the upstream recognizer.
    pub patterns: PatternTrack,
    pub frames: Vec<EllipseFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    pub board: BoardSpec,
    /// Exactly two cameras, `A` then `B`.
    pub cameras: Vec<CameraInput>,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2d {
    pub bin_width: f64,
    pub range: f64,
    pub bins: usize,
    /// Row-major `counts[iy * bins + ix]`; out-of-range errors are clamped
    /// into the edge bins.
    pub counts: Vec<u64>,
}

impl Histogram2d {
    pub fn new(bin_width: f64, range: f64) -> Self {
        let bins = (2.0 * range / bin_width).round() as usize;
        Self {
            bin_width,
            range,
            bins,
            counts: vec![0; bins * bins],
        }
    }

    fn bin(&self, v: f64) -> usize {
        (((v + self.range) / self.bin_width).floor().max(0.0) as usize).min(self.bins - 1)
    }

    pub fn add(&mut self, e: &Vector2<f64>) {
        let (ix, iy) = (self.bin(e.x), self.bin(e.y));
        self.counts[iy * self.bins + ix] += 1;
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        -self.range + (i as f64 + 0.5) * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    /// Number of 2D reprojection errors.
    pub count: usize,
    pub mean: [f64; 2],
    pub sigma: [f64; 2],
    pub rms: f64,
    /// Σ ρ(‖e‖²) over this camera's errors.
    pub robust_cost: f64,
    pub histogram: Histogram2d,
}

impl ResidualStats {
    pub fn from_errors(errors: &[Vector2<f64>], robust_cost: f64) -> Self {
        let n = errors.len().max(1) as f64;
        let mean = errors.iter().sum::<Vector2<f64>>() / n;
        let var = errors.iter().map(|e| (e - mean).component_mul(&(e - mean))).sum::<Vector2<f64>>() / n;
        let rms = (errors.iter().map(|e| e.norm_squared()).sum::<f64>() / n).sqrt();
        let mut histogram = Histogram2d::new(HISTOGRAM_BIN_WIDTH, HISTOGRAM_RANGE);
        errors.iter().for_each(|e| histogram.add(e));
        Self {
            count: errors.len(),
            mean: [mean.x, mean.y],
            sigma: [var.x.sqrt(), var.y.sqrt()],
            rms,
            robust_cost,
            histogram,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualCounts {
    pub reference_points: usize,
    pub reference_excluded: usize,
    pub target_points: usize,
    pub target_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub t_min: f64,
    pub t_max: f64,
    pub poses: usize,
    pub rotation_rms: f64,
    pub translation_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    /// PnP failures per camera `[A, B]`.
    pub pnp_failures: [usize; 2],
    pub segments: Vec<SegmentSummary>,
    pub hand_eye_seed: SpatiotemporalParams,
    pub hand_eye: SpatiotemporalParams,
    pub hand_eye_seed_cost: f64,
    pub hand_eye_cost: f64,
    pub hand_eye_pairs: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub reference: CameraId,
    /// Target camera w.r.t. the reference camera.
    pub params: SpatiotemporalParams,
    /// Reference-camera trajectory (reference clock) after refinement.
    pub trajectory: PiecewiseTrajectory,
    /// Indexed `[reference, target]`.
    pub residuals: [ResidualStats; 2],
    /// Indexed `[A, B]`.
    pub tracking: [TrackingStats; 2],
    pub counts: ResidualCounts,
    pub init: InitSummary,
    pub ba_report: SolverReport,
    pub warnings: Vec<String>,
}

impl CalibrationResult {
    /// Camera B w.r.t. camera A regardless of which one was the reference.
    pub fn params_b_in_a(&self) -> SpatiotemporalParams {
        match self.reference {
            CameraId::A => self.params,
            CameraId::B => self.params.inverse(),
        }
    }
}

/// Control-point blocks of one trajectory segment.
#[derive(Debug, Clone)]
pub struct SegmentBlocks {
    pub rotation: Vec<BlockId>,
    pub position: Vec<BlockId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reference,
    Target,
}

/// Bundle-adjustment problem with handles to its blocks.
pub struct BaProblem {
    pub problem: Problem,
    pub segments: Vec<SegmentBlocks>,
    pub extrinsic_rotation: BlockId,
    pub extrinsic_translation: BlockId,
    pub time_offset: BlockId,
    /// Role and pattern index (within its track) of every residual block.
    pub residual_sources: Vec<(Role, usize)>,
    pub counts: ResidualCounts,
    pub offset_bounds: (f64, f64),
}

fn reprojection_errors(points: &[(Vector3<f64>, Vector2<f64>)], xc: impl Fn(&Vector3<f64>) -> Vector3<f64>, intr: &CameraIntrinsics, r: &mut [f64]) -> bool {
    for (i, (pw, obs)) in points.iter().enumerate() {
        let Ok(px) = project(&xc(pw), intr) else {
            return false;
        };
        r[2 * i] = px.x - obs.x;
        r[2 * i + 1] = px.y - obs.y;
    }
    true
}

/// All points of one reference-camera pattern.
/// Parameters: `[rot_0, pos_0, …, rot_3, pos_3]`.
struct ReferenceCost {
    u: f64,
    points: Vec<(Vector3<f64>, Vector2<f64>)>,
    intr: CameraIntrinsics,
}

fn unpack_control_points(params: &[&[f64]], count: usize) -> (Vec<Rotation>, Vec<Vector3<f64>>) {
    (
        (0..count).map(|k| rotation_from_slice(params[2 * k])).collect(),
        (0..count).map(|k| Vector3::from_column_slice(params[2 * k + 1])).collect(),
    )
}

impl CostFunction for ReferenceCost {
    fn residual_dim(&self) -> usize {
        2 * self.points.len()
    }

    fn evaluate(&self, params: &[&[f64]], r: &mut [f64]) -> bool {
        let (rot, pos) = unpack_control_points(params, SUPPORT);
        let (rc, _) = local_rotation_with_jacobians(&rot, self.u);
        let p = local_position(&pos, self.u);
        reprojection_errors(&self.points, |pw| rc.inverse_rotate(&(pw - p)), &self.intr, r)
    }

    fn jacobians(&self, params: &[&[f64]], r: &mut [f64], jac: &mut [DMatrix<f64>]) -> Option<bool> {
        let (rot, pos) = unpack_control_points(params, SUPPORT);
        let (rc, drot) = local_rotation_with_jacobians(&rot, self.u);
        let p = local_position(&pos, self.u);
        let w = position_weights(self.u);
        let rt = rc.matrix().transpose();
        for (i, (pw, obs)) in self.points.iter().enumerate() {
            let xc = rt * (pw - p);
            let Ok((px, dp)) = project_with_jacobian(&xc, &self.intr) else {
                return Some(false);
            };
            r[2 * i] = px.x - obs.x;
            r[2 * i + 1] = px.y - obs.y;
            let d_eps = dp * skew(&xc);
            let d_p = dp * (-rt);
            for k in 0..SUPPORT {
                jac[2 * k].view_mut((2 * i, 0), (2, 3)).copy_from(&(d_eps * drot[k]));
                jac[2 * k + 1].view_mut((2 * i, 0), (2, 3)).copy_from(&(d_p * w[k]));
            }
        }
        Some(true)
    }
}

/// All points of one target-camera pattern. The control points spanned by
/// the whole offset box are parameters so the active window can move with
/// the offset. Parameters: `[rot_0, pos_0, …, rot_{K-1}, pos_{K-1},
/// extrinsic rotation, extrinsic translation, offset]`.
struct TargetCost {
    timestamp: f64,
    start_time: f64,
    knot_spacing: f64,
    /// Control points in the segment, and the first one passed in.
    segment_len: usize,
    first: usize,
    count: usize,
    points: Vec<(Vector3<f64>, Vector2<f64>)>,
    intr: CameraIntrinsics,
}

impl TargetCost {
    fn window(&self, offset: f64) -> Option<(usize, f64)> {
        let loc = locate_knot(self.start_time, self.knot_spacing, self.segment_len, self.timestamp + offset).ok()?;
        let local = loc.first.checked_sub(self.first)?;
        (local + SUPPORT <= self.count).then_some((local, loc.u))
    }
}

impl CostFunction for TargetCost {
    fn residual_dim(&self) -> usize {
        2 * self.points.len()
    }

    fn evaluate(&self, params: &[&[f64]], r: &mut [f64]) -> bool {
        let k = 2 * self.count;
        let offset = params[k + 2][0];
        let Some((local, u)) = self.window(offset) else {
            return false;
        };
        let (rot, pos) = unpack_control_points(&params[2 * local..], SUPPORT);
        let (rc, _) = local_rotation_with_jacobians(&rot, u);
        let p = local_position(&pos, u);
        let rx = rotation_from_slice(params[k]);
        let tx = Vector3::from_column_slice(params[k + 1]);
        reprojection_errors(&self.points, |pw| rx.inverse_rotate(&(rc.inverse_rotate(&(pw - p)) - tx)), &self.intr, r)
    }

    fn jacobians(&self, params: &[&[f64]], r: &mut [f64], jac: &mut [DMatrix<f64>]) -> Option<bool> {
        let k = 2 * self.count;
        let offset = params[k + 2][0];
        let Some((local, u)) = self.window(offset) else {
            return Some(false);
        };
        let (rot, pos) = unpack_control_points(&params[2 * local..], SUPPORT);
        let (rc, drot) = local_rotation_with_jacobians(&rot, u);
        let p = local_position(&pos, u);
        let omega = local_angular_velocity(&rot, u, self.knot_spacing);
        let v = local_velocity(&pos, u, self.knot_spacing);
        let w = position_weights(u);
        let rt = rc.matrix().transpose();
        let rx = rotation_from_slice(params[k]);
        let rxt = rx.matrix().transpose();
        let tx = Vector3::from_column_slice(params[k + 1]);
        for j in jac.iter_mut() {
            j.fill(0.0);
        }
        for (i, (pw, obs)) in self.points.iter().enumerate() {
            let y = rt * (pw - p);
            let xc = rxt * (y - tx);
            let Ok((px, dp)) = project_with_jacobian(&xc, &self.intr) else {
                return Some(false);
            };
            r[2 * i] = px.x - obs.x;
            r[2 * i + 1] = px.y - obs.y;
            let d_eps: Matrix2x3<f64> = dp * rxt * skew(&y);
            let d_p: Matrix2x3<f64> = dp * (-rxt * rt);
            for m in 0..SUPPORT {
                jac[2 * (local + m)].view_mut((2 * i, 0), (2, 3)).copy_from(&(d_eps * drot[m]));
                jac[2 * (local + m) + 1].view_mut((2 * i, 0), (2, 3)).copy_from(&(d_p * w[m]));
            }
            jac[k].view_mut((2 * i, 0), (2, 3)).copy_from(&(dp * skew(&xc)));
            jac[k + 1].view_mut((2 * i, 0), (2, 3)).copy_from(&(dp * (-rxt)));
            let dy = -omega.cross(&y) - rt * v;
            jac[k + 2].view_mut((2 * i, 0), (2, 1)).copy_from(&(dp * rxt * dy));
        }
        Some(true)
    }
}

fn pattern_points(p: &GridPattern) -> Vec<(Vector3<f64>, Vector2<f64>)> {
    p.points.iter().map(|q| (q.board, q.image)).collect()
}

/// Assembles the continuous-time bundle adjustment. Control points are added
/// in time order, the extrinsic and offset blocks last.
#[allow(clippy::too_many_arguments)]
pub fn build_ba_problem(
    traj: &PiecewiseTrajectory,
    st: &SpatiotemporalParams,
    reference: &PatternTrack,
    target: &PatternTrack,
    reference_intr: &CameraIntrinsics,
    target_intr: &CameraIntrinsics,
    huber_delta: f64,
    offset_margin: f64,
) -> Result<BaProblem, PipelineError> {
    let ba_err = |e: &dyn fmt::Display| PipelineError::new(Stage::BundleAdjustment, e);
    let loss = HuberLoss::new(huber_delta).map_err(|e| ba_err(&e))?;
    let mut problem = Problem::new();
    let segments: Vec<SegmentBlocks> = traj
        .segments()
        .iter()
        .map(|seg| {
            let mut blocks = SegmentBlocks {
                rotation: Vec::new(),
                position: Vec::new(),
            };
            for (r, p) in seg.rotation.control_points().iter().zip(seg.position.control_points()) {
                blocks.rotation.push(problem.add_rotation_block(r));
                blocks.position.push(problem.add_parameter_block(Manifold::Euclidean, p.as_slice().to_vec()));
            }
            blocks
        })
        .collect();
    let extrinsic_rotation = problem.add_rotation_block(&st.rotation);
    let extrinsic_translation = problem.add_parameter_block(Manifold::Euclidean, st.translation.as_slice().to_vec());
    let time_offset = problem.add_parameter_block(Manifold::Euclidean, vec![st.time_offset]);
    let (lo, hi) = (st.time_offset - offset_margin, st.time_offset + offset_margin);
    problem.set_bounds(time_offset, vec![lo], vec![hi]).map_err(|e| ba_err(&e))?;

    let mut counts = ResidualCounts::default();
    let mut residual_sources = Vec::new();
    for (pi, pattern) in reference.patterns().iter().enumerate() {
        let Some(si) = traj.segment_index(pattern.timestamp) else {
            counts.reference_excluded += pattern.len();
            continue;
        };
        let seg = &traj.segments()[si];
        let loc = seg.rotation.locate(pattern.timestamp).map_err(|e| ba_err(&e))?;
        let mut params = Vec::with_capacity(2 * SUPPORT);
        for m in loc.first..loc.first + SUPPORT {
            params.push(segments[si].rotation[m]);
            params.push(segments[si].position[m]);
        }
        problem.add_residual_block(
            Box::new(ReferenceCost {
                u: loc.u,
                points: pattern_points(pattern),
                intr: *reference_intr,
            }),
            params,
            Some(loss),
            Some(2),
            "reference",
        );
        counts.reference_points += pattern.len();
        residual_sources.push((Role::Reference, pi));
    }
    for (pi, pattern) in target.patterns().iter().enumerate() {
        let Some(si) = traj.segment_covering(pattern.timestamp + lo, pattern.timestamp + hi) else {
            counts.target_excluded += pattern.len();
            continue;
        };
        let seg = &traj.segments()[si];
        let a = seg.rotation.locate(pattern.timestamp + lo).map_err(|e| ba_err(&e))?;
        let b = seg.rotation.locate(pattern.timestamp + hi).map_err(|e| ba_err(&e))?;
        let count = b.first + SUPPORT - a.first;
        let mut params = Vec::with_capacity(2 * count + 3);
        for m in a.first..a.first + count {
            params.push(segments[si].rotation[m]);
            params.push(segments[si].position[m]);
        }
        params.extend([extrinsic_rotation, extrinsic_translation, time_offset]);
        problem.add_residual_block(
            Box::new(TargetCost {
                timestamp: pattern.timestamp,
                start_time: seg.rotation.start_time(),
                knot_spacing: seg.rotation.knot_spacing(),
                segment_len: seg.rotation.control_points().len(),
                first: a.first,
                count,
                points: pattern_points(pattern),
                intr: *target_intr,
            }),
            params,
            Some(loss),
            Some(2),
            "target",
        );
        counts.target_points += pattern.len();
        residual_sources.push((Role::Target, pi));
    }
    if counts.reference_points == 0 || counts.target_points == 0 {
        return Err(PipelineError::new(
            Stage::BundleAdjustment,
            format!(
                "insufficient coverage: {} reference and {} target points fall inside the trajectory",
                counts.reference_points, counts.target_points
            ),
        ));
    }
    Ok(BaProblem {
        problem,
        segments,
        extrinsic_rotation,
        extrinsic_translation,
        time_offset,
        residual_sources,
        counts,
        offset_bounds: (lo, hi),
    })
}

impl BaProblem {
    pub fn params(&self) -> SpatiotemporalParams {
        SpatiotemporalParams {
            rotation: self.problem.rotation(self.extrinsic_rotation),
            translation: Vector3::from_column_slice(self.problem.values(self.extrinsic_translation)),
            time_offset: self.problem.values(self.time_offset)[0],
        }
    }

    /// `traj` with control points replaced by the current block values.
    pub fn trajectory(&self, traj: &PiecewiseTrajectory) -> Result<PiecewiseTrajectory, PipelineError> {
        let err = |e: crate::spline::SplineError| PipelineError::new(Stage::BundleAdjustment, e);
        let segments = traj
            .segments()
            .iter()
            .zip(&self.segments)
            .map(|(seg, blocks)| {
                let rot = RotationSpline::new(
                    seg.rotation.start_time(),
                    seg.rotation.knot_spacing(),
                    blocks.rotation.iter().map(|&b| self.problem.rotation(b)).collect(),
                )
                .map_err(err)?;
                let pos = PositionSpline::new(
                    seg.position.start_time(),
                    seg.position.knot_spacing(),
                    blocks
                        .position
                        .iter()
                        .map(|&b| Vector3::from_column_slice(self.problem.values(b)))
                        .collect(),
                )
                .map_err(err)?;
                TrajectorySegment::new(rot, pos, seg.t_min(), seg.t_max()).map_err(err)
            })
            .collect::<Result<Vec<_>, _>>()?;
        PiecewiseTrajectory::new(segments).map_err(err)
    }
}

/// Per-role residual statistics at the problem's current state, indexed
/// `[reference, target]`.
pub fn compute_residual_stats(ba: &BaProblem, huber_delta: f64) -> Result<[ResidualStats; 2], PipelineError> {
    let loss = HuberLoss::new(huber_delta).map_err(|e| PipelineError::new(Stage::BundleAdjustment, e))?;
    let mut errors: [Vec<Vector2<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut costs = [0.0; 2];
    for (i, (role, _)) in ba.residual_sources.iter().enumerate() {
        let r = ba.problem.evaluate_residual(i).ok_or_else(|| {
            PipelineError::new(Stage::BundleAdjustment, format!("residual block {i} cannot be evaluated"))
        })?;
        let slot = match role {
            Role::Reference => 0,
            Role::Target => 1,
        };
        for c in r.chunks(2) {
            let e = Vector2::new(c[0], c[1]);
            costs[slot] += loss.evaluate(e.norm_squared()).0;
            errors[slot].push(e);
        }
    }
    Ok([
        ResidualStats::from_errors(&errors[0], costs[0]),
        ResidualStats::from_errors(&errors[1], costs[1]),
    ])
}

fn timed_poses(
    track: &PatternTrack,
    intr: &CameraIntrinsics,
) -> (Vec<TimedPose>, usize) {
    let results: Vec<Option<TimedPose>> = track
        .patterns()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if !p.complete {
                return None;
            }
            solve_pnp(p, intr).ok().map(|s| TimedPose {
                pose: s.pose,
                timestamp: p.timestamp,
                pattern: i,
            })
        })
        .collect();
    let complete = track.complete_count();
    let poses: Vec<TimedPose> = results.into_iter().flatten().collect();
    let failures = complete - poses.len();
    (poses, failures)
}

/// Runs the full calibration.
pub fn run_calibration(input: &CalibrationInput) -> Result<CalibrationResult, PipelineError> {
    let cfg = &input.config;
    cfg.validate().map_err(|e| PipelineError::new(Stage::Input, e))?;
    if input.cameras.len() != 2 {
        return Err(PipelineError::new(
            Stage::Input,
            format!("exactly two cameras are required, got {}", input.cameras.len()),
        ));
    }
    input.board.validate().map_err(|e| PipelineError::new(Stage::Input, e))?;
    for (id, cam) in [CameraId::A, CameraId::B].iter().zip(&input.cameras) {
        if cam.patterns.complete_count() == 0 {
            return Err(PipelineError::new(Stage::Input, format!("camera {id:?} has no complete patterns")));
        }
        cam.intrinsics.validate().map_err(|e| PipelineError::new(Stage::Input, e))?;
    }
    let mut warnings = Vec::new();

    let (track_a, track_b) = rayon::join(
        || track_incomplete(&input.cameras[0].patterns, &input.cameras[0].frames, &input.board, &cfg.tracking),
        || track_incomplete(&input.cameras[1].patterns, &input.cameras[1].frames, &input.board, &cfg.tracking),
    );
    let tracks = [
        track_a.map_err(|e| PipelineError::new(Stage::Tracking, e))?,
        track_b.map_err(|e| PipelineError::new(Stage::Tracking, e))?,
    ];
    let tracking = [0, 1].map(|i| {
        let frames = input.cameras[i].frames.len().max(input.cameras[i].patterns.len());
        TrackingStats::new(&tracks[i], frames)
    });
    let reference = select_reference(&tracks[0], &tracks[1]).map_err(|e| PipelineError::new(Stage::ReferenceSelection, e))?;
    let (ri, ti) = match reference {
        CameraId::A => (0, 1),
        CameraId::B => (1, 0),
    };
    log::info!(
        "tracking: A {} complete + {} incomplete, B {} complete + {} incomplete; reference {reference:?}",
        tracking[0].complete,
        tracking[0].incomplete,
        tracking[1].complete,
        tracking[1].incomplete
    );
    let (ref_intr, tgt_intr) = (&input.cameras[ri].intrinsics, &input.cameras[ti].intrinsics);

    let ((ref_poses, ref_fail), (tgt_poses, tgt_fail)) =
        rayon::join(|| timed_poses(&tracks[ri], ref_intr), || timed_poses(&tracks[ti], tgt_intr));
    if ref_poses.is_empty() || tgt_poses.is_empty() {
        return Err(PipelineError::new(
            Stage::Pnp,
            format!("no PnP poses (reference {}, target {})", ref_poses.len(), tgt_poses.len()),
        ));
    }
    let mut pnp_failures = [0; 2];
    pnp_failures[ri] = ref_fail;
    pnp_failures[ti] = tgt_fail;
    if ref_fail + tgt_fail > 0 {
        warnings.push(format!("PnP failed on {} patterns", ref_fail + tgt_fail));
    }

    let runs = segment_poses(&ref_poses, cfg.segment_gap, cfg.min_run_length);
    if runs.is_empty() {
        return Err(PipelineError::new(
            Stage::Segmentation,
            format!(
                "no run of more than {} reference poses with gaps below {} s",
                cfg.min_run_length, cfg.segment_gap
            ),
        ));
    }
    let fits: Vec<_> = runs
        .par_iter()
        .map(|run| fit_spline_segment(run, cfg.knot_spacing))
        .collect::<Result<_, InitError>>()
        .map_err(|e| PipelineError::new(Stage::SplineFit, e))?;
    let segments_summary = runs
        .iter()
        .zip(&fits)
        .map(|(run, f)| SegmentSummary {
            t_min: f.segment.t_min(),
            t_max: f.segment.t_max(),
            poses: run.len(),
            rotation_rms: f.rotation_rms,
            translation_rms: f.translation_rms,
        })
        .collect();
    let traj = PiecewiseTrajectory::new(fits.into_iter().map(|f| f.segment).collect())
        .map_err(|e| PipelineError::new(Stage::SplineFit, e))?;

    log::info!("spline fit: {} segment(s)", traj.segments().len());

    let he = hand_eye_init(&traj, &tgt_poses, &cfg.hand_eye).map_err(|e| PipelineError::new(Stage::HandEye, e))?;
    if let Some(w) = &he.conditioning_warning {
        warnings.push(w.clone());
    }

    log::info!(
        "hand-eye: offset {:.6} s from {} pairs (cost {:.3e} -> {:.3e})",
        he.params.time_offset,
        he.pairs,
        he.seed_cost,
        he.refined_cost
    );

    let mut ba = build_ba_problem(
        &traj,
        &he.params,
        &tracks[ri],
        &tracks[ti],
        ref_intr,
        tgt_intr,
        cfg.huber_delta,
        cfg.ba_offset_margin,
    )?;
    let ba_report = ba.problem.solve(&cfg.solver).map_err(|e| match e {
        SolverError::Conditioning => PipelineError::new(Stage::BundleAdjustment, "normal equations are singular; motion is degenerate"),
        e => PipelineError::new(Stage::BundleAdjustment, e),
    })?;
    if ba_report.termination == Termination::MaxIterations {
        warnings.push("bundle adjustment stopped at the iteration limit".into());
    }
    if !ba_report.condition_estimate.is_finite() {
        warnings.push("bundle adjustment normal equations are singular at the solution".into());
    }
    log::info!(
        "bundle adjustment: cost {:.6e} -> {:.6e} in {} iterations ({:?})",
        ba_report.initial_cost,
        ba_report.final_cost,
        ba_report.iterations,
        ba_report.termination
    );
    let residuals = compute_residual_stats(&ba, cfg.huber_delta)?;
    let params = ba.params();
    let (lo, hi) = ba.offset_bounds;
    if params.time_offset <= lo || params.time_offset >= hi {
        warnings.push(format!("time offset {:.6} s reached its bundle-adjustment bound", params.time_offset));
    }
    Ok(CalibrationResult {
        reference,
        params,
        trajectory: ba.trajectory(&traj)?,
        residuals,
        tracking,
        counts: ba.counts,
        init: InitSummary {
            pnp_failures,
            segments: segments_summary,
            hand_eye_seed: he.seed,
            hand_eye: he.params,
            hand_eye_seed_cost: he.seed_cost,
            hand_eye_cost: he.refined_cost,
            hand_eye_pairs: he.pairs,
        },
        ba_report,
        warnings,
    })
}
