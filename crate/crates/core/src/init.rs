//! Initialization: per-pattern PnP, pose segmentation, spline fitting and
//! continuous-time hand-eye alignment.
//!
//! All poses here are camera-to-world (`T_w_c`, the camera's pose in the
//! board frame). The extrinsic `X` maps target-camera coordinates into the
//! reference camera, so `T_w_ct(τ_t) = T_w_cr(τ_t + offset) · X`.

use crate::geometry::{project_with_jacobian, skew, CameraIntrinsics, Pose, Rotation};
use crate::solver::{CostFunction, HuberLoss, Manifold, Problem, SolverError, SolverOptions, SolverReport};
use crate::spline::{
    local_position, local_rotation_with_jacobians, position_weights, PiecewiseTrajectory, PositionSpline,
    RotationSpline, SplineError, TrajectorySegment, SUPPORT,
};
use crate::tracking::GridPattern;
use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, SymmetricEigen, Vector2, Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

/// Consecutive poses further apart than this start a new run (seconds).
pub const DEFAULT_SEGMENT_GAP: f64 = 0.1;
/// Runs with this many poses or fewer are discarded.
pub const DEFAULT_MIN_RUN_LENGTH: usize = 50;
/// Symmetric search bound for the time offset (seconds).
pub const DEFAULT_OFFSET_BOUND: f64 = 0.15;
pub const DEFAULT_OFFSET_GRID_STEP: f64 = 1e-3;
/// PnP refinement ending above this RMS (pixels) counts as diverged.
pub const PNP_MAX_RMS: f64 = 5.0;
pub const SPLINE_FIT_MAX_ITERATIONS: usize = 50;
pub const MIN_HAND_EYE_PAIRS: usize = 10;
/// Minimum span of a fitted run, in knot intervals.
pub const MIN_SPAN_KNOTS: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("degenerate pattern: {0}")]
    DegeneratePattern(String),
    #[error("PnP refinement diverged (RMS {rms:.3} px)")]
    PnpFailure { rms: f64 },
    #[error("run spans {span:.4} s, need at least {required:.4} s")]
    InsufficientSpan { span: f64, required: f64 },
    #[error("only {pairs} usable hand-eye pairs, need {required}")]
    InsufficientOverlap { pairs: usize, required: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    /// Camera-to-world.
    pub pose: Pose,
    pub timestamp: f64,
    /// Index of the source pattern in its track.
    pub pattern: usize,
}

/// Extrinsics and clock offset of the target camera w.r.t. the reference.
///
/// `rotation`/`translation` map target-camera coordinates into the reference
/// camera frame; clocks relate as `τ_ref = τ_target + time_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatiotemporalParams {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
    pub time_offset: f64,
}

impl Default for SpatiotemporalParams {
    fn default() -> Self {
        Self {
            rotation: Rotation::identity(),
            translation: Vector3::zeros(),
            time_offset: 0.0,
        }
    }
}

impl SpatiotemporalParams {
    pub fn extrinsic(&self) -> Pose {
        Pose::new(self.rotation, self.translation)
    }

    /// The same relation with the camera roles swapped.
    pub fn inverse(&self) -> Self {
        let inv = self.extrinsic().inverse();
        Self {
            rotation: inv.rotation,
            translation: inv.translation,
            time_offset: -self.time_offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution {
    /// Camera-to-world.
    pub pose: Pose,
    /// Root mean squared reprojection error per point, pixels.
    pub rms: f64,
}

fn hartley(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let d = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if d > 0.0 { std::f64::consts::SQRT_2 / d } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// DLT homography `dst ~ H · src`.
fn homography(src: &[Vector2<f64>], dst: &[Vector2<f64>]) -> Matrix3<f64> {
    let ts = hartley(src);
    let td = hartley(dst);
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (s, d) in src.iter().zip(dst) {
        let s = ts * s.push(1.0);
        let d = td * d.push(1.0);
        let r1 = SMatrix::<f64, 1, 9>::from_row_slice(&[
            -s.x, -s.y, -1.0, 0.0, 0.0, 0.0, d.x * s.x, d.x * s.y, d.x,
        ]);
        let r2 = SMatrix::<f64, 1, 9>::from_row_slice(&[
            0.0, 0.0, 0.0, -s.x, -s.y, -1.0, d.y * s.x, d.y * s.y, d.y,
        ]);
        ata += r1.transpose() * r1 + r2.transpose() * r2;
    }
    let eig = SymmetricEigen::new(ata);
    let (imin, _) = eig.eigenvalues.argmin();
    let h = eig.eigenvectors.column(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    td.try_inverse().unwrap_or_else(Matrix3::identity) * hn * ts
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt
}

fn reprojection(world_to_cam: &Pose, pattern: &GridPattern, intr: &CameraIntrinsics) -> Option<(f64, DMatrix<f64>, Vec<f64>)> {
    let n = pattern.points.len();
    let mut jac = DMatrix::zeros(2 * n, 6);
    let mut res = vec![0.0; 2 * n];
    let mut cost = 0.0;
    let r = world_to_cam.rotation.matrix();
    for (i, p) in pattern.points.iter().enumerate() {
        let xc = world_to_cam.transform_point(&p.board);
        let (px, dp) = project_with_jacobian(&xc, intr).ok()?;
        let e = px - p.image;
        res[2 * i] = e.x;
        res[2 * i + 1] = e.y;
        cost += e.norm_squared();
        let d_rot = dp * (-r * skew(&p.board));
        for c in 0..3 {
            for k in 0..2 {
                jac[(2 * i + k, c)] = d_rot[(k, c)];
                jac[(2 * i + k, 3 + c)] = dp[(k, c)];
            }
        }
    }
    Some((cost, jac, res))
}

/// Planar PnP: homography initialization refined with Levenberg–Marquardt
/// through the full projection model. Returns the camera-to-world pose.
pub fn solve_pnp(pattern: &GridPattern, intr: &CameraIntrinsics) -> Result<PnpSolution, InitError> {
    let n = pattern.points.len();
    if n < 4 {
        return Err(InitError::DegeneratePattern(format!("{n} points, need at least 4")));
    }
    let src: Vec<Vector2<f64>> = pattern.points.iter().map(|p| p.board.xy()).collect();
    let centroid = src.iter().sum::<Vector2<f64>>() / n as f64;
    let cov = src
        .iter()
        .map(|p| (p - centroid) * (p - centroid).transpose())
        .sum::<nalgebra::Matrix2<f64>>();
    let ev = cov.symmetric_eigenvalues();
    let (lo, hi) = (ev.min().max(0.0), ev.max());
    if hi <= 0.0 || (lo / hi).sqrt() < 1e-6 {
        return Err(InitError::DegeneratePattern("points are collinear".into()));
    }
    let dst: Vec<Vector2<f64>> = pattern
        .points
        .iter()
        .map(|p| Vector2::new((p.image.x - intr.cx) / intr.fx, (p.image.y - intr.cy) / intr.fy))
        .collect();
    let h = homography(&src, &dst);
    let (h1, h2, h3) = (h.column(0).into_owned(), h.column(1).into_owned(), h.column(2).into_owned());
    let mut scale = 2.0 / (h1.norm() + h2.norm());
    if (h3 * scale).z < 0.0 {
        scale = -scale;
    }
    let (r1, r2) = (h1 * scale, h2 * scale);
    let rm = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    let mut pose = Pose::new(Rotation::from_matrix(&nearest_rotation(&rm)), h3 * scale);

    let (mut cost, mut jac, mut res) =
        reprojection(&pose, pattern, intr).ok_or_else(|| InitError::DegeneratePattern("board behind camera".into()))?;
    let mut lambda = 1e-4;
    for _ in 0..100 {
        let hess: Matrix6<f64> = (jac.transpose() * &jac).fixed_view::<6, 6>(0, 0).into_owned();
        let grad: Vector6<f64> = (jac.transpose() * nalgebra::DVector::from_column_slice(&res))
            .fixed_rows::<6>(0)
            .into_owned();
        let mut improved = false;
        while lambda < 1e16 {
            let damped = hess + Matrix6::from_diagonal(&hess.diagonal().map(|d| d.max(1e-12) * lambda));
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-grad))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = Pose::new(
                pose.rotation.retract(&step.fixed_rows::<3>(0).into_owned()),
                pose.translation + step.fixed_rows::<3>(3),
            );
            match reprojection(&candidate, pattern, intr) {
                Some((c, j, r)) if c < cost => {
                    let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    pose = candidate;
                    (cost, jac, res) = (c, j, r);
                    lambda = (lambda * 0.5).max(1e-12);
                    improved = rel > 1e-14;
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !improved {
            break;
        }
    }
    let rms = (cost / n as f64).sqrt();
    if !(rms <= PNP_MAX_RMS) {
        return Err(InitError::PnpFailure { rms });
    }
    Ok(PnpSolution {
        pose: pose.inverse(),
        rms,
    })
}

/// Splits time-ordered poses at gaps of `max_gap` or more and discards runs
/// with `min_run_length` poses or fewer.
pub fn segment_poses(poses: &[TimedPose], max_gap: f64, min_run_length: usize) -> Vec<Vec<TimedPose>> {
    let mut runs: Vec<Vec<TimedPose>> = Vec::new();
    let mut current: Vec<TimedPose> = Vec::new();
    for p in poses {
        if let Some(last) = current.last() {
            if p.timestamp - last.timestamp >= max_gap {
                runs.push(std::mem::take(&mut current));
            }
        }
        current.push(*p);
    }
    runs.push(current);
    runs.retain(|r| r.len() > min_run_length);
    runs
}

/// Pose-fit residual `[Log(R̃ᵀ R̂(τ)), p̂(τ) − p̃]` over the four rotation and
/// four position control points of one query.
struct PoseFitCost {
    u: f64,
    rotation: Rotation,
    position: Vector3<f64>,
}

impl PoseFitCost {
    fn unpack(params: &[&[f64]]) -> ([Rotation; 4], [Vector3<f64>; 4]) {
        (
            std::array::from_fn(|k| crate::solver::rotation_from_slice(params[2 * k])),
            std::array::from_fn(|k| Vector3::from_column_slice(params[2 * k + 1])),
        )
    }
}

impl CostFunction for PoseFitCost {
    fn residual_dim(&self) -> usize {
        6
    }

    fn evaluate(&self, params: &[&[f64]], r: &mut [f64]) -> bool {
        let (rot, pos) = Self::unpack(params);
        let (rhat, _) = local_rotation_with_jacobians(&rot, self.u);
        let e = self.rotation.between(&rhat);
        let t = local_position(&pos, self.u) - self.position;
        r[..3].copy_from_slice(e.as_slice());
        r[3..].copy_from_slice(t.as_slice());
        true
    }

    fn jacobians(&self, params: &[&[f64]], r: &mut [f64], jac: &mut [DMatrix<f64>]) -> Option<bool> {
        let (rot, pos) = Self::unpack(params);
        let (rhat, drot) = local_rotation_with_jacobians(&rot, self.u);
        let e = self.rotation.between(&rhat);
        let t = local_position(&pos, self.u) - self.position;
        r[..3].copy_from_slice(e.as_slice());
        r[3..].copy_from_slice(t.as_slice());
        let jr_inv = crate::geometry::right_jacobian_inverse(&e);
        let w = position_weights(self.u);
        for k in 0..SUPPORT {
            jac[2 * k].fill(0.0);
            jac[2 * k].view_mut((0, 0), (3, 3)).copy_from(&(jr_inv * drot[k]));
            jac[2 * k + 1].fill(0.0);
            jac[2 * k + 1].view_mut((3, 0), (3, 3)).copy_from(&(Matrix3::identity() * w[k]));
        }
        Some(true)
    }
}

#[derive(Debug, Clone)]
pub struct SegmentFit {
    pub segment: TrajectorySegment,
    pub rotation_rms: f64,
    pub translation_rms: f64,
    pub report: SolverReport,
}

/// Knot grid aligned to multiples of `knot_spacing` covering `[t_first, t_last]`.
/// Returns `(start_time, control point count)`.
pub fn knot_grid(t_first: f64, t_last: f64, knot_spacing: f64) -> (f64, usize) {
    let k = (t_first / knot_spacing).floor() as i64;
    let start = (k - 1) as f64 * knot_spacing;
    let n = ((t_last - start) / knot_spacing).floor() as usize + 3;
    (start, n.max(SUPPORT))
}

/// Fits one cumulative B-spline segment to a run of poses.
pub fn fit_spline_segment(run: &[TimedPose], knot_spacing: f64) -> Result<SegmentFit, InitError> {
    if !(knot_spacing > 0.0) {
        return Err(InitError::InvalidArgument(format!("knot spacing must be positive, got {knot_spacing}")));
    }
    let (Some(first), Some(last)) = (run.first(), run.last()) else {
        return Err(InitError::InsufficientSpan {
            span: 0.0,
            required: MIN_SPAN_KNOTS * knot_spacing,
        });
    };
    let span = last.timestamp - first.timestamp;
    if span < MIN_SPAN_KNOTS * knot_spacing {
        return Err(InitError::InsufficientSpan {
            span,
            required: MIN_SPAN_KNOTS * knot_spacing,
        });
    }
    let (start, n) = knot_grid(first.timestamp, last.timestamp, knot_spacing);
    let times: Vec<f64> = run.iter().map(|p| p.timestamp).collect();
    let nearest = |t: f64| -> &TimedPose {
        let i = times.partition_point(|&x| x < t);
        if i == 0 {
            &run[0]
        } else if i == run.len() || (t - times[i - 1]) <= (times[i] - t) {
            &run[i - 1]
        } else {
            &run[i]
        }
    };
    let mut problem = Problem::new();
    let mut rot_ids = Vec::with_capacity(n);
    let mut pos_ids = Vec::with_capacity(n);
    for m in 0..n {
        let seed = nearest(start + m as f64 * knot_spacing).pose;
        rot_ids.push(problem.add_rotation_block(&seed.rotation));
        pos_ids.push(problem.add_parameter_block(Manifold::Euclidean, seed.translation.as_slice().to_vec()));
    }
    let scaffold = PositionSpline::new(start, knot_spacing, vec![Vector3::zeros(); n])?;
    for p in run {
        let loc = scaffold.locate(p.timestamp)?;
        let mut params = Vec::with_capacity(2 * SUPPORT);
        for k in 0..SUPPORT {
            params.push(rot_ids[loc.first + k]);
            params.push(pos_ids[loc.first + k]);
        }
        problem.add_residual_block(
            Box::new(PoseFitCost {
                u: loc.u,
                rotation: p.pose.rotation,
                position: p.pose.translation,
            }),
            params,
            None,
            None,
            "pose",
        );
    }
    let options = SolverOptions {
        max_iterations: SPLINE_FIT_MAX_ITERATIONS,
        ..Default::default()
    };
    let report = problem.solve(&options)?;
    let rotation = RotationSpline::new(start, knot_spacing, rot_ids.iter().map(|&id| problem.rotation(id)).collect())?;
    let position = PositionSpline::new(
        start,
        knot_spacing,
        pos_ids.iter().map(|&id| Vector3::from_column_slice(problem.values(id))).collect(),
    )?;
    let t_max = position.valid_interval().1.min(last.timestamp + 1e-9);
    let segment = TrajectorySegment::new(rotation, position, first.timestamp, t_max)?;
    let (mut sr, mut st) = (0.0, 0.0);
    for p in run {
        let q = segment.pose(p.timestamp)?;
        sr += p.pose.rotation.angle_to(&q.rotation).powi(2);
        st += (p.pose.translation - q.translation).norm_squared();
    }
    Ok(SegmentFit {
        segment,
        rotation_rms: (sr / run.len() as f64).sqrt(),
        translation_rms: (st / run.len() as f64).sqrt(),
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandEyeConfig {
    pub offset_bound: f64,
    pub grid_step: f64,
}

impl Default for HandEyeConfig {
    fn default() -> Self {
        Self {
            offset_bound: DEFAULT_OFFSET_BOUND,
            grid_step: DEFAULT_OFFSET_GRID_STEP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HandEyeResult {
    pub params: SpatiotemporalParams,
    /// Best coarse-grid cell before joint refinement.
    pub seed: SpatiotemporalParams,
    pub seed_cost: f64,
    pub refined_cost: f64,
    pub pairs: usize,
    /// Set when the rotation alignment is rank deficient (insufficient
    /// rotational excitation).
    pub conditioning_warning: Option<String>,
    pub report: SolverReport,
}

struct HandEyePair {
    t0: f64,
    t1: f64,
    /// Measured relative motion of the target camera.
    b: Pose,
}

/// `[Log(R̂ R_Bᵀ), t̂ − R̂ R_Bᵀ t_B]` where `T̂ = X⁻¹ A X`.
fn hand_eye_residual(a: &Pose, x: &Pose, b: &Pose) -> Vector6<f64> {
    let pred = x.inverse().compose(a).compose(x);
    let d = pred.rotation.compose(&b.rotation.inverse());
    let mut r = Vector6::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&d.log());
    r.fixed_rows_mut::<3>(3).copy_from(&(pred.translation - d.rotate(&b.translation)));
    r
}

struct HandEyeCost {
    traj: Arc<PiecewiseTrajectory>,
    t0: f64,
    t1: f64,
    b: Pose,
}

impl CostFunction for HandEyeCost {
    fn residual_dim(&self) -> usize {
        6
    }

    fn evaluate(&self, params: &[&[f64]], r: &mut [f64]) -> bool {
        let x = Pose::new(crate::solver::rotation_from_slice(params[0]), Vector3::from_column_slice(params[1]));
        let o = params[2][0];
        let (Ok(p0), Ok(p1)) = (self.traj.eval_pose(self.t0 + o), self.traj.eval_pose(self.t1 + o)) else {
            return false;
        };
        let a = p0.inverse().compose(&p1);
        r.copy_from_slice(hand_eye_residual(&a, &x, &self.b).as_slice());
        true
    }
}

struct GridCell {
    offset: f64,
    extrinsic: Pose,
    cost: f64,
    singular_values: Vector3<f64>,
}

fn closed_form_cell(traj: &PiecewiseTrajectory, pairs: &[HandEyePair], offset: f64) -> Option<GridCell> {
    let mut motions = Vec::with_capacity(pairs.len());
    for p in pairs {
        let a0 = traj.eval_pose(p.t0 + offset).ok()?;
        let a1 = traj.eval_pose(p.t1 + offset).ok()?;
        motions.push(a0.inverse().compose(&a1));
    }
    let mut m = Matrix3::zeros();
    for (a, p) in motions.iter().zip(pairs) {
        m += a.rotation.log() * p.b.rotation.log().transpose();
    }
    let svd = m.svd(true, true);
    let singular_values = svd.singular_values;
    let rx = if singular_values[0] > 0.0 {
        nearest_rotation(&m)
    } else {
        Matrix3::identity()
    };
    let mut lhs = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (a, p) in motions.iter().zip(pairs) {
        let c = a.rotation.matrix() - Matrix3::identity();
        lhs += c.transpose() * c;
        rhs += c.transpose() * (rx * p.b.translation - a.translation);
    }
    let tx = lhs.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let extrinsic = Pose::new(Rotation::from_matrix(&rx), tx);
    let cost = motions
        .iter()
        .zip(pairs)
        .map(|(a, p)| hand_eye_residual(a, &extrinsic, &p.b).norm_squared())
        .sum();
    Some(GridCell {
        offset,
        extrinsic,
        cost,
        singular_values,
    })
}

/// Continuous-time hand-eye alignment of target-camera poses (target clock)
/// against the reference trajectory: coarse offset grid with a closed-form
/// rotation-then-translation solve per cell, then joint refinement.
pub fn hand_eye_init(
    traj: &PiecewiseTrajectory,
    target_poses: &[TimedPose],
    config: &HandEyeConfig,
) -> Result<HandEyeResult, InitError> {
    if !(config.offset_bound >= 0.0) || !(config.grid_step > 0.0) {
        return Err(InitError::InvalidArgument("offset bound must be ≥ 0 and grid step > 0".into()));
    }
    let bound = config.offset_bound;
    let mut sorted = target_poses.to_vec();
    sorted.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let pairs: Vec<HandEyePair> = sorted
        .windows(2)
        .filter(|w| traj.segment_covering(w[0].timestamp - bound, w[1].timestamp + bound).is_some())
        .map(|w| HandEyePair {
            t0: w[0].timestamp,
            t1: w[1].timestamp,
            b: w[0].pose.inverse().compose(&w[1].pose),
        })
        .collect();
    if pairs.len() < MIN_HAND_EYE_PAIRS {
        return Err(InitError::InsufficientOverlap {
            pairs: pairs.len(),
            required: MIN_HAND_EYE_PAIRS,
        });
    }
    let cells = (2.0 * bound / config.grid_step).round() as i64;
    let best = (0..=cells)
        .into_par_iter()
        .filter_map(|i| closed_form_cell(traj, &pairs, (-bound + i as f64 * config.grid_step).clamp(-bound, bound)))
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.offset.total_cmp(&b.offset)))
        .ok_or(InitError::InsufficientOverlap {
            pairs: 0,
            required: MIN_HAND_EYE_PAIRS,
        })?;
    let sv = best.singular_values;
    let conditioning_warning = (sv[0] <= 1e-12 || sv[1] < 1e-3 * sv[0]).then(|| {
        format!(
            "rotation alignment is rank deficient (singular values {:.3e}, {:.3e}, {:.3e}); excite rotation about more axes",
            sv[0], sv[1], sv[2]
        )
    });
    let seed = SpatiotemporalParams {
        rotation: best.extrinsic.rotation,
        translation: best.extrinsic.translation,
        time_offset: best.offset,
    };

    let shared = Arc::new(traj.clone());
    let mut problem = Problem::new();
    let rot = problem.add_rotation_block(&seed.rotation);
    let trans = problem.add_parameter_block(Manifold::Euclidean, seed.translation.as_slice().to_vec());
    let off = problem.add_parameter_block(Manifold::Euclidean, vec![seed.time_offset]);
    problem.set_bounds(off, vec![-bound], vec![bound])?;
    for p in &pairs {
        problem.add_residual_block(
            Box::new(HandEyeCost {
                traj: Arc::clone(&shared),
                t0: p.t0,
                t1: p.t1,
                b: p.b,
            }),
            vec![rot, trans, off],
            None::<HuberLoss>,
            None,
            "hand_eye",
        );
    }
    let report = problem.solve(&SolverOptions::default())?;
    let params = SpatiotemporalParams {
        rotation: problem.rotation(rot),
        translation: Vector3::from_column_slice(problem.values(trans)),
        time_offset: problem.values(off)[0],
    };
    Ok(HandEyeResult {
        params,
        seed,
        seed_cost: report.initial_cost,
        refined_cost: report.final_cost,
        pairs: pairs.len(),
        conditioning_warning,
        report,
    })
}
