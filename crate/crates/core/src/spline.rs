//! Cubic cumulative uniform B-splines over R³ and SO(3).
//!
//! Control point `m` of a spline is attached to time `start + m·Δτ`. A query
//! at `τ ∈ [start + s·Δτ, start + (s+1)·Δτ)` blends control points
//! `s−1 ..= s+2` in cumulative (telescoping) form:
//!
//! ```text
//! p(τ) = p_i + Σ_{j=1..3} λ_j(u) · (p_{i+j} − p_{i+j−1})
//! R(τ) = R_i · Π_{j=1..3} Exp(λ_j(u) · Log(R_{i+j−1}ᵀ R_{i+j}))
//! ```
//!
//! with `i = s − 1` and `u = (τ − start)/Δτ − s`. The valid query interval of a
//! spline with `N` control points is therefore `[start + Δτ, start + (N−2)·Δτ)`.

use crate::geometry::{right_jacobian, right_jacobian_inverse, Pose, Rotation};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default knot spacing (seconds) for both splines of a segment.
pub const DEFAULT_KNOT_SPACING: f64 = 0.05;

/// Control points touched by a single query.
pub const SUPPORT: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("time {t} outside the valid interval [{start}, {end})")]
    OutOfInterval { t: f64, start: f64, end: f64 },
    #[error("no trajectory segment covers time {0}")]
    NoSegment(f64),
}

/// Cumulative blending weights `[λ₁, λ₂, λ₃]` for `u ∈ [0, 1)`.
pub fn cumulative_basis(u: f64) -> Result<[f64; 3], SplineError> {
    if !(0.0..1.0).contains(&u) {
        return Err(SplineError::InvalidArgument(format!(
            "basis parameter u = {u} outside [0, 1)"
        )));
    }
    Ok(basis(u))
}

#[inline]
fn basis(u: f64) -> [f64; 3] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        (u3 - 3.0 * u2 + 3.0 * u + 5.0) / 6.0,
        (-2.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
        u3 / 6.0,
    ]
}

/// `dλ/du`.
#[inline]
fn basis_derivative(u: f64) -> [f64; 3] {
    let u2 = u * u;
    [
        (3.0 * u2 - 6.0 * u + 3.0) / 6.0,
        (-6.0 * u2 + 6.0 * u + 3.0) / 6.0,
        0.5 * u2,
    ]
}

/// Position of a query inside a uniform spline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotLocation {
    /// Index of the first of the four control points involved.
    pub first: usize,
    pub u: f64,
}

fn valid_interval(start: f64, dt: f64, n: usize) -> (f64, f64) {
    (start + dt, start + (n as f64 - 2.0) * dt)
}

/// Locates `t` in a uniform spline with `n` control points starting at `start`.
pub fn locate_knot(start: f64, dt: f64, n: usize, t: f64) -> Result<KnotLocation, SplineError> {
    let (lo, hi) = valid_interval(start, dt, n);
    if !t.is_finite() || t < lo || t >= hi {
        return Err(SplineError::OutOfInterval { t, start: lo, end: hi });
    }
    let x = (t - start) / dt;
    let mut s = x.floor();
    let mut u = x - s;
    // Rounding at the interval ends can push `s` one knot outside.
    if s < 1.0 {
        s = 1.0;
        u = 0.0;
    } else if s > n as f64 - 3.0 {
        s = n as f64 - 3.0;
        u = 1.0 - f64::EPSILON;
    }
    Ok(KnotLocation {
        first: s as usize - 1,
        u: u.clamp(0.0, 1.0 - f64::EPSILON),
    })
}

fn check_timing(start: f64, dt: f64, n: usize) -> Result<(), SplineError> {
    if !start.is_finite() || !dt.is_finite() || dt <= 0.0 {
        return Err(SplineError::InvalidArgument(format!(
            "invalid spline timing (start = {start}, spacing = {dt})"
        )));
    }
    if n < SUPPORT {
        return Err(SplineError::InvalidArgument(format!(
            "a cubic spline needs at least {SUPPORT} control points, got {n}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPositionSpline")]
pub struct PositionSpline {
    start_time: f64,
    knot_spacing: f64,
    control_points: Vec<Vector3<f64>>,
}

#[derive(Deserialize)]
struct RawPositionSpline {
    start_time: f64,
    knot_spacing: f64,
    control_points: Vec<Vector3<f64>>,
}

impl TryFrom<RawPositionSpline> for PositionSpline {
    type Error = SplineError;
    fn try_from(r: RawPositionSpline) -> Result<Self, SplineError> {
        PositionSpline::new(r.start_time, r.knot_spacing, r.control_points)
    }
}

impl PositionSpline {
    pub fn new(start_time: f64, knot_spacing: f64, control_points: Vec<Vector3<f64>>) -> Result<Self, SplineError> {
        check_timing(start_time, knot_spacing, control_points.len())?;
        if !control_points.iter().all(|p| p.iter().all(|c| c.is_finite())) {
            return Err(SplineError::InvalidArgument("non-finite control point".into()));
        }
        Ok(Self {
            start_time,
            knot_spacing,
            control_points,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn knot_spacing(&self) -> f64 {
        self.knot_spacing
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.control_points
    }

    /// Time attached to control point `m`.
    pub fn knot_time(&self, m: usize) -> f64 {
        self.start_time + m as f64 * self.knot_spacing
    }

    pub fn valid_interval(&self) -> (f64, f64) {
        valid_interval(self.start_time, self.knot_spacing, self.control_points.len())
    }

    pub fn locate(&self, t: f64) -> Result<KnotLocation, SplineError> {
        locate_knot(self.start_time, self.knot_spacing, self.control_points.len(), t)
    }

    pub fn eval(&self, t: f64) -> Result<Vector3<f64>, SplineError> {
        let loc = self.locate(t)?;
        Ok(local_position(&self.control_points[loc.first..loc.first + SUPPORT], loc.u))
    }

    pub fn velocity(&self, t: f64) -> Result<Vector3<f64>, SplineError> {
        let loc = self.locate(t)?;
        Ok(local_velocity(
            &self.control_points[loc.first..loc.first + SUPPORT],
            loc.u,
            self.knot_spacing,
        ))
    }

    /// Location of `t` plus the scalar weight of each of the four involved
    /// control points (`∂p(τ)/∂p_m = weight · I`).
    pub fn weights(&self, t: f64) -> Result<(KnotLocation, [f64; 4]), SplineError> {
        let loc = self.locate(t)?;
        Ok((loc, position_weights(loc.u)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRotationSpline")]
pub struct RotationSpline {
    start_time: f64,
    knot_spacing: f64,
    control_points: Vec<Rotation>,
}

#[derive(Deserialize)]
struct RawRotationSpline {
    start_time: f64,
    knot_spacing: f64,
    control_points: Vec<Rotation>,
}

impl TryFrom<RawRotationSpline> for RotationSpline {
    type Error = SplineError;
    fn try_from(r: RawRotationSpline) -> Result<Self, SplineError> {
        RotationSpline::new(r.start_time, r.knot_spacing, r.control_points)
    }
}

/// A rotation query together with the right-perturbation Jacobians of the
/// result w.r.t. each of the four involved control points.
#[derive(Debug, Clone)]
pub struct RotationWithJacobians {
    pub location: KnotLocation,
    pub rotation: Rotation,
    /// `jacobians[k]` maps `δ` in `R_{first+k} ← R_{first+k}·Exp(δ)` to `ε` in
    /// `R(τ) ← R(τ)·Exp(ε)`.
    pub jacobians: [Matrix3<f64>; 4],
}

impl RotationSpline {
    pub fn new(start_time: f64, knot_spacing: f64, control_points: Vec<Rotation>) -> Result<Self, SplineError> {
        check_timing(start_time, knot_spacing, control_points.len())?;
        Ok(Self {
            start_time,
            knot_spacing,
            control_points,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn knot_spacing(&self) -> f64 {
        self.knot_spacing
    }

    pub fn control_points(&self) -> &[Rotation] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [Rotation] {
        &mut self.control_points
    }

    pub fn knot_time(&self, m: usize) -> f64 {
        self.start_time + m as f64 * self.knot_spacing
    }

    pub fn valid_interval(&self) -> (f64, f64) {
        valid_interval(self.start_time, self.knot_spacing, self.control_points.len())
    }

    pub fn locate(&self, t: f64) -> Result<KnotLocation, SplineError> {
        locate_knot(self.start_time, self.knot_spacing, self.control_points.len(), t)
    }

    pub fn eval(&self, t: f64) -> Result<Rotation, SplineError> {
        let loc = self.locate(t)?;
        Ok(local_rotation(&self.control_points[loc.first..loc.first + SUPPORT], loc.u))
    }

    /// Body-frame angular velocity, rad/s.
    pub fn angular_velocity(&self, t: f64) -> Result<Vector3<f64>, SplineError> {
        let loc = self.locate(t)?;
        Ok(local_angular_velocity(
            &self.control_points[loc.first..loc.first + SUPPORT],
            loc.u,
            self.knot_spacing,
        ))
    }

    pub fn eval_with_jacobians(&self, t: f64) -> Result<RotationWithJacobians, SplineError> {
        let loc = self.locate(t)?;
        let (rotation, jacobians) =
            local_rotation_with_jacobians(&self.control_points[loc.first..loc.first + SUPPORT], loc.u);
        Ok(RotationWithJacobians {
            location: loc,
            rotation,
            jacobians,
        })
    }
}

/// Weights of the four control points of a position query at `u`
/// (`∂p/∂p_m = w_m · I`).
pub fn position_weights(u: f64) -> [f64; 4] {
    let l = basis(u);
    [1.0 - l[0], l[0] - l[1], l[1] - l[2], l[2]]
}

/// Position from the four control points of one query.
pub fn local_position(p: &[Vector3<f64>], u: f64) -> Vector3<f64> {
    let lambda = basis(u);
    let mut out = p[0];
    for j in 1..SUPPORT {
        out += lambda[j - 1] * (p[j] - p[j - 1]);
    }
    out
}

pub fn local_velocity(p: &[Vector3<f64>], u: f64, knot_spacing: f64) -> Vector3<f64> {
    let dl = basis_derivative(u);
    let mut out = Vector3::zeros();
    for j in 1..SUPPORT {
        out += dl[j - 1] * (p[j] - p[j - 1]);
    }
    out / knot_spacing
}

fn increments(r: &[Rotation]) -> [Vector3<f64>; 3] {
    [r[0].between(&r[1]), r[1].between(&r[2]), r[2].between(&r[3])]
}

/// Rotation from the four control points of one query.
pub fn local_rotation(r: &[Rotation], u: f64) -> Rotation {
    let d = increments(r);
    let lambda = basis(u);
    let mut out = r[0];
    for j in 0..3 {
        out = out.compose(&Rotation::exp(&(lambda[j] * d[j])));
    }
    out
}

/// Body-frame angular velocity from the four control points of one query.
pub fn local_angular_velocity(r: &[Rotation], u: f64, knot_spacing: f64) -> Vector3<f64> {
    let d = increments(r);
    let lambda = basis(u);
    let dl = basis_derivative(u);
    let mut omega = Vector3::zeros();
    for j in 0..3 {
        let a = Rotation::exp(&(lambda[j] * d[j]));
        omega = a.inverse_rotate(&omega) + dl[j] * d[j];
    }
    omega / knot_spacing
}

/// [`local_rotation`] plus the right-perturbation Jacobians w.r.t. each of
/// the four control points (see [`RotationWithJacobians`]).
pub fn local_rotation_with_jacobians(r: &[Rotation], u: f64) -> (Rotation, [Matrix3<f64>; 4]) {
    let d = increments(r);
    let lambda = basis(u);
    let a: [Rotation; 3] = std::array::from_fn(|j| Rotation::exp(&(lambda[j] * d[j])));
    // suffix[j] = A_{j+1} ⋯ A_3 (as matrices), suffix[3] = I.
    let mut suffix = [Matrix3::identity(); 4];
    for j in (0..3).rev() {
        suffix[j] = a[j].matrix() * suffix[j + 1];
    }
    let mut rotation = r[0];
    for aj in &a {
        rotation = rotation.compose(aj);
    }
    let mut jac = [Matrix3::zeros(); 4];
    jac[0] = suffix[0].transpose();
    for j in 0..3 {
        // ε = P_jᵀ λ_j J_r(λ_j d_j) Δd_j, with P_j = suffix[j+1].
        let common = suffix[j + 1].transpose()
            * (lambda[j] * right_jacobian(&(lambda[j] * d[j])))
            * right_jacobian_inverse(&d[j]);
        let m_t = Rotation::exp(&d[j]).matrix().transpose();
        jac[j] -= common * m_t;
        jac[j + 1] += common;
    }
    (rotation, jac)
}

pub fn eval_position(spline: &PositionSpline, t: f64) -> Result<Vector3<f64>, SplineError> {
    spline.eval(t)
}

pub fn eval_rotation(spline: &RotationSpline, t: f64) -> Result<Rotation, SplineError> {
    spline.eval(t)
}

pub fn eval_velocity(spline: &PositionSpline, t: f64) -> Result<Vector3<f64>, SplineError> {
    spline.velocity(t)
}

pub fn eval_angular_velocity(spline: &RotationSpline, t: f64) -> Result<Vector3<f64>, SplineError> {
    spline.angular_velocity(t)
}

/// One continuous piece of a trajectory, valid on `[t_min, t_max)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSegment")]
pub struct TrajectorySegment {
    pub rotation: RotationSpline,
    pub position: PositionSpline,
    t_min: f64,
    t_max: f64,
}

#[derive(Deserialize)]
struct RawSegment {
    rotation: RotationSpline,
    position: PositionSpline,
    t_min: f64,
    t_max: f64,
}

impl TryFrom<RawSegment> for TrajectorySegment {
    type Error = SplineError;
    fn try_from(r: RawSegment) -> Result<Self, SplineError> {
        TrajectorySegment::new(r.rotation, r.position, r.t_min, r.t_max)
    }
}

impl TrajectorySegment {
    pub fn new(rotation: RotationSpline, position: PositionSpline, t_min: f64, t_max: f64) -> Result<Self, SplineError> {
        let (ra, rb) = rotation.valid_interval();
        let (pa, pb) = position.valid_interval();
        if !(t_min < t_max) || t_min < ra.max(pa) || t_max > rb.min(pb) {
            return Err(SplineError::InvalidArgument(format!(
                "segment interval [{t_min}, {t_max}) not inside spline intervals [{ra}, {rb}) and [{pa}, {pb})"
            )));
        }
        Ok(Self {
            rotation,
            position,
            t_min,
            t_max,
        })
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_min && t < self.t_max
    }

    /// Camera-to-world pose at `t`, ignoring the segment interval (only the
    /// spline intervals are checked).
    pub fn pose(&self, t: f64) -> Result<Pose, SplineError> {
        Ok(Pose::new(self.rotation.eval(t)?, self.position.eval(t)?))
    }
}

/// Ordered, pairwise disjoint trajectory segments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawTrajectory")]
pub struct PiecewiseTrajectory {
    segments: Vec<TrajectorySegment>,
}

#[derive(Deserialize)]
struct RawTrajectory {
    segments: Vec<TrajectorySegment>,
}

impl TryFrom<RawTrajectory> for PiecewiseTrajectory {
    type Error = SplineError;
    fn try_from(r: RawTrajectory) -> Result<Self, SplineError> {
        PiecewiseTrajectory::new(r.segments)
    }
}

impl PiecewiseTrajectory {
    pub fn new(mut segments: Vec<TrajectorySegment>) -> Result<Self, SplineError> {
        segments.sort_by(|a, b| a.t_min.total_cmp(&b.t_min));
        for w in segments.windows(2) {
            if w[1].t_min < w[0].t_max {
                return Err(SplineError::InvalidArgument(format!(
                    "segments [{}, {}) and [{}, {}) overlap",
                    w[0].t_min, w[0].t_max, w[1].t_min, w[1].t_max
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[TrajectorySegment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [TrajectorySegment] {
        &mut self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Index of the segment whose half-open interval contains `t`.
    pub fn segment_index(&self, t: f64) -> Option<usize> {
        let idx = self.segments.partition_point(|s| s.t_min <= t);
        if idx == 0 {
            return None;
        }
        self.segments[idx - 1].contains(t).then_some(idx - 1)
    }

    /// Index of the single segment containing the whole closed interval
    /// `[a, b]`.
    pub fn segment_covering(&self, a: f64, b: f64) -> Option<usize> {
        let i = self.segment_index(a)?;
        self.segments[i].contains(b).then_some(i)
    }

    pub fn eval_pose(&self, t: f64) -> Result<Pose, SplineError> {
        let i = self.segment_index(t).ok_or(SplineError::NoSegment(t))?;
        self.segments[i].pose(t)
    }
}

pub fn eval_pose(traj: &PiecewiseTrajectory, t: f64) -> Result<Pose, SplineError> {
    traj.eval_pose(t)
}
