//! Synthetic stereo detection streams with known ground truth.
//!
//! A rig moves in front of the circle grid along a sum-of-sinusoids recipe.
//! At every frame both cameras project the board, lose circles to FOV
//! clipping, oblique viewing and random dropout, and add Gaussian pixel
//! noise. Camera A runs on the reference clock; camera B's timestamps are
//! set back by `time_shift`, so the true offset is `+time_shift`.

use crate::geometry::{project, CameraIntrinsics, Distortion, Pose, Rotation};
use crate::init::SpatiotemporalParams;
use crate::pipeline::{CalibrationInput, CameraInput, PipelineConfig};
use crate::spline::{PositionSpline, RotationSpline, SplineError};
use crate::tracking::{BoardSpec, EllipseFrame, GridPattern, PatternTrack};
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const DEFAULT_STANDOFF: f64 = 0.6;
pub const DEFAULT_FRAME_RATE: f64 = 100.0;
pub const DEFAULT_DURATION: f64 = 30.0;
pub const DEFAULT_OBLIQUE_CUTOFF_DEG: f64 = 65.0;
pub const DEFAULT_BASELINE: [f64; 3] = [0.12, 0.0, 0.0];
pub const DEFAULT_EXTRINSIC_EULER_DEG: [f64; 3] = [-0.43, 0.685, 0.392];
/// Fraction of frames in which both cameras must see the whole board.
pub const MIN_VISIBLE_FRACTION: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("board fully visible to both cameras in only {:.1}% of frames (need {:.0}%)", fraction * 100.0, required * 100.0)]
    Visibility { fraction: f64, required: f64 },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Sinusoid {
    pub const fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase,
        }
    }

    fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Representation {
    /// Poses straight from the sinusoid recipe.
    Analytic,
    /// Cubic cumulative B-spline whose control points sample the recipe at
    /// integer multiples of `knot_spacing`. Exactly representable by a
    /// calibrator spline with the same spacing.
    Spline { knot_spacing: f64 },
}

/// Camera A's motion: position sinusoids around `origin`, an orientation that
/// keeps aiming at `aim` on the board, and a rotation-vector
/// wobble on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryRecipe {
    /// Nominal camera-A position in the board frame, meters.
    pub origin: [f64; 3],
    /// Point on the board camera A aims at.
    pub aim: [f64; 3],
    /// Per-axis position terms, meters.
    pub position: [Vec<Sinusoid>; 3],
    /// Per-axis rotation-vector wobble terms, radians.
    pub rotation: [Vec<Sinusoid>; 3],
    pub representation: Representation,
}

impl TrajectoryRecipe {
    /// Default excitation for a rig whose midpoint faces the board center.
    pub fn centered(board: &BoardSpec, baseline: &Vector3<f64>, standoff: f64) -> Self {
        let c = board_center(board);
        let origin = c - baseline / 2.0 - Vector3::new(0.0, 0.0, standoff);
        let aim = Vector3::new(origin.x, origin.y, 0.0);
        let deg = PI / 180.0;
        Self {
            origin: origin.into(),
            aim: aim.into(),
            position: [
                vec![Sinusoid::new(0.06, 0.92, 0.3), Sinusoid::new(0.02, 2.44, 1.1)],
                vec![Sinusoid::new(0.04, 1.24, 0.9), Sinusoid::new(0.015, 3.08, 0.0)],
                vec![Sinusoid::new(0.04, 0.76, 2.0), Sinusoid::new(0.01, 2.12, 0.4)],
            ],
            rotation: [
                vec![Sinusoid::new(6.0 * deg, 1.16, 0.2), Sinusoid::new(2.0 * deg, 2.68, 1.0)],
                vec![Sinusoid::new(4.0 * deg, 1.48, 1.3), Sinusoid::new(1.5 * deg, 3.32, 0.0)],
                vec![Sinusoid::new(11.0 * deg, 0.84, 0.7), Sinusoid::new(3.0 * deg, 2.36, 2.2)],
            ],
            representation: Representation::Analytic,
        }
    }

    /// Camera-A-to-world pose from the sinusoid recipe.
    pub fn analytic_pose(&self, t: f64) -> Pose {
        let sum = |terms: &[Sinusoid]| terms.iter().map(|s| s.eval(t)).sum::<f64>();
        let offset = Vector3::new(sum(&self.position[0]), sum(&self.position[1]), sum(&self.position[2]));
        let position = Vector3::from(self.origin) + offset;
        let wobble = Vector3::new(sum(&self.rotation[0]), sum(&self.rotation[1]), sum(&self.rotation[2]));
        let base = look_at(&position, &Vector3::from(self.aim));
        Pose::new(base.compose(&Rotation::exp(&wobble)), position)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let finite = self
            .position
            .iter()
            .chain(&self.rotation)
            .flatten()
            .all(|s| s.amplitude.is_finite() && s.frequency.is_finite() && s.phase.is_finite());
        if !finite || !self.origin.iter().chain(&self.aim).all(|v| v.is_finite()) {
            return Err(ScenarioError::Invalid("trajectory recipe has non-finite values".into()));
        }
        if let Representation::Spline { knot_spacing } = self.representation {
            if !(knot_spacing > 0.0) {
                return Err(ScenarioError::Invalid("spline knot spacing must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for TrajectoryRecipe {
    fn default() -> Self {
        Self::centered(&default_board(), &Vector3::from(DEFAULT_BASELINE), DEFAULT_STANDOFF)
    }
}

fn board_center(board: &BoardSpec) -> Vector3<f64> {
    let pts: Vec<Vector3<f64>> = (0..board.num_circles()).map(|j| board.object_point(j)).collect();
    pts.iter().sum::<Vector3<f64>>() / pts.len() as f64
}

/// Camera-to-world rotation whose optical axis points from `eye` to `target`,
/// with the camera x axis kept close to the world x axis.
fn look_at(eye: &Vector3<f64>, target: &Vector3<f64>) -> Rotation {
    let z = (target - eye).normalize();
    let y = z.cross(&Vector3::x()).normalize();
    let x = y.cross(&z);
    Rotation::from_matrix(&Matrix3::from_columns(&[x, y, z]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DropoutModel {
    /// Per-circle Bernoulli dropout probability.
    pub rate: f64,
    pub fov_clipping: bool,
    /// Circles seen more obliquely than this (view ray vs board normal) are
    /// dropped.
    pub oblique_cutoff_deg: f64,
    /// Random false ellipses added to every frame.
    pub spurious_per_frame: usize,
}

impl Default for DropoutModel {
    fn default() -> Self {
        Self {
            rate: 0.0,
            fov_clipping: true,
            oblique_cutoff_deg: DEFAULT_OBLIQUE_CUTOFF_DEG,
            spurious_per_frame: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub scenario_id: String,
    pub board: BoardSpec,
    /// Cameras `[A, B]`.
    pub intrinsics: [CameraIntrinsics; 2],
    /// Camera B in camera A: intrinsic X-Y-Z Euler angles, degrees.
    pub extrinsic_euler_deg: [f64; 3],
    /// Camera B in camera A, meters.
    pub extrinsic_translation: [f64; 3],
    /// Camera B's clock is set back by this much, seconds.
    pub time_shift: f64,
    pub trajectory: TrajectoryRecipe,
    pub duration: f64,
    pub frame_rate: f64,
    pub noise_sigma: f64,
    pub dropout: DropoutModel,
    pub seed: u64,
}

/// Asymmetric 3 x 7 grid with 5 cm spacing.
pub fn default_board() -> BoardSpec {
    BoardSpec {
        rows: 3,
        cols: 7,
        spacing: 0.05,
    }
}

pub fn default_intrinsics() -> [CameraIntrinsics; 2] {
    [
        CameraIntrinsics {
            fx: 300.0,
            fy: 300.0,
            cx: 173.0,
            cy: 130.0,
            distortion: Distortion {
                k1: -0.05,
                k2: 0.01,
                p1: 1e-4,
                p2: -1e-4,
            },
            sensor_size: Some([346, 260]),
        },
        CameraIntrinsics {
            fx: 302.0,
            fy: 301.0,
            cx: 171.5,
            cy: 131.0,
            distortion: Distortion {
                k1: -0.045,
                k2: 0.008,
                p1: -1e-4,
                p2: 2e-4,
            },
            sensor_size: Some([346, 260]),
        },
    ]
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            scenario_id: "default".into(),
            board: default_board(),
            intrinsics: default_intrinsics(),
            extrinsic_euler_deg: DEFAULT_EXTRINSIC_EULER_DEG,
            extrinsic_translation: DEFAULT_BASELINE,
            time_shift: 0.01,
            trajectory: TrajectoryRecipe::default(),
            duration: DEFAULT_DURATION,
            frame_rate: DEFAULT_FRAME_RATE,
            noise_sigma: 0.1,
            dropout: DropoutModel::default(),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// True extrinsics and offset of camera B w.r.t. camera A.
    pub fn truth(&self) -> SpatiotemporalParams {
        let d = self.extrinsic_euler_deg.map(f64::to_radians);
        SpatiotemporalParams {
            rotation: Rotation::from_euler_xyz(d[0], d[1], d[2]),
            translation: Vector3::from(self.extrinsic_translation),
            time_offset: self.time_shift,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.into()));
        self.board.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        for intr in &self.intrinsics {
            intr.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad("duration must be positive");
        }
        if !(self.frame_rate > 0.0) || !self.frame_rate.is_finite() {
            return bad("frame rate must be positive");
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad("noise sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.dropout.rate) {
            return bad("dropout rate must lie in [0, 1]");
        }
        if !(self.dropout.oblique_cutoff_deg > 0.0) {
            return bad("oblique cutoff must be positive");
        }
        if !self.time_shift.is_finite()
            || !self.extrinsic_euler_deg.iter().chain(&self.extrinsic_translation).all(|v| v.is_finite())
        {
            return bad("extrinsics and time shift must be finite");
        }
        self.trajectory.validate()
    }

    pub fn frame_times(&self) -> Vec<f64> {
        let n = (self.duration * self.frame_rate).round() as usize;
        (0..n).map(|i| i as f64 / self.frame_rate).collect()
    }
}

/// Ground-truth camera-A trajectory.
#[derive(Debug, Clone)]
pub enum TruthTrajectory {
    Analytic(TrajectoryRecipe),
    Spline {
        rotation: RotationSpline,
        position: PositionSpline,
    },
}

impl TruthTrajectory {
    pub fn build(recipe: &TrajectoryRecipe, t_min: f64, t_max: f64) -> Result<Self, ScenarioError> {
        match recipe.representation {
            Representation::Analytic => Ok(Self::Analytic(recipe.clone())),
            Representation::Spline { knot_spacing } => {
                let first = (t_min / knot_spacing).floor() as i64 - 2;
                let last = (t_max / knot_spacing).ceil() as i64 + 3;
                let poses: Vec<Pose> = (first..=last)
                    .map(|m| recipe.analytic_pose(m as f64 * knot_spacing))
                    .collect();
                let start = first as f64 * knot_spacing;
                Ok(Self::Spline {
                    rotation: RotationSpline::new(start, knot_spacing, poses.iter().map(|p| p.rotation).collect())?,
                    position: PositionSpline::new(start, knot_spacing, poses.iter().map(|p| p.translation).collect())?,
                })
            }
        }
    }

    /// Camera-A-to-world pose on the reference clock.
    pub fn pose(&self, t: f64) -> Result<Pose, SplineError> {
        match self {
            Self::Analytic(r) => Ok(r.analytic_pose(t)),
            Self::Spline { rotation, position } => Ok(Pose::new(rotation.eval(t)?, position.eval(t)?)),
        }
    }
}

/// One camera's detections.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraStream {
    pub intrinsics: CameraIntrinsics,
    pub frames: Vec<EllipseFrame>,
    /// Frames in which every circle survived.
    pub patterns: PatternTrack,
}

#[derive(Debug, Clone)]
pub struct GroundTruthBundle {
    pub spec: ScenarioSpec,
    pub trajectory: TruthTrajectory,
    /// Streams `[A, B]`.
    pub streams: [CameraStream; 2],
    pub truth: SpatiotemporalParams,
    /// Fraction of frames where both cameras see every circle (before
    /// random dropout).
    pub visible_fraction: f64,
}

impl GroundTruthBundle {
    pub fn calibration_input(&self, config: PipelineConfig) -> CalibrationInput {
        CalibrationInput {
            board: self.spec.board,
            cameras: self
                .streams
                .iter()
                .map(|s| CameraInput {
                    intrinsics: s.intrinsics,
                    patterns: s.patterns.clone(),
                    frames: s.frames.clone(),
                })
                .collect(),
            config,
        }
    }
}

/// Geometric visibility of circle `j` from a camera at `pose` (camera-to-world).
fn visible_projection(
    pose: &Pose,
    point: &Vector3<f64>,
    intr: &CameraIntrinsics,
    model: &DropoutModel,
) -> Option<Vector2<f64>> {
    let pc = pose.inverse_transform_point(point);
    let px = project(&pc, intr).ok()?;
    if model.fov_clipping && !intr.contains(&px) {
        return None;
    }
    let ray = (point - pose.translation).normalize();
    let cos = ray.dot(&Vector3::z()).abs();
    if cos < model.oblique_cutoff_deg.to_radians().cos() {
        return None;
    }
    Some(px)
}

/// Generates the detection streams of a scenario. Deterministic in the scenario
/// (including its seed).
pub fn generate(spec: &ScenarioSpec) -> Result<GroundTruthBundle, ScenarioError> {
    spec.validate()?;
    let times = spec.frame_times();
    let trajectory = TruthTrajectory::build(&spec.trajectory, 0.0, spec.duration)?;
    let truth = spec.truth();
    let x = truth.extrinsic();
    let board = &spec.board;
    let points: Vec<Vector3<f64>> = (0..board.num_circles()).map(|j| board.object_point(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut frames: [Vec<EllipseFrame>; 2] = [Vec::new(), Vec::new()];
    let mut patterns: [Vec<GridPattern>; 2] = [Vec::new(), Vec::new()];
    let mut fully_visible = 0usize;
    for &t in &times {
        let pose_a = trajectory.pose(t)?;
        let poses = [pose_a, pose_a.compose(&x)];
        let stamps = [t, t - spec.time_shift];
        let mut all_visible = true;
        for cam in 0..2 {
            let intr = &spec.intrinsics[cam];
            let mut observed: Vec<(usize, Vector2<f64>)> = Vec::with_capacity(points.len());
            for (j, p) in points.iter().enumerate() {
                let Some(px) = visible_projection(&poses[cam], p, intr, &spec.dropout) else {
                    all_visible = false;
                    continue;
                };
                if spec.dropout.rate > 0.0 && rng.random::<f64>() < spec.dropout.rate {
                    continue;
                }
                let noisy = if spec.noise_sigma > 0.0 {
                    px + Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng))
                } else {
                    px
                };
                observed.push((j, noisy));
            }
            let mut centers: Vec<Vector2<f64>> = observed.iter().map(|o| o.1).collect();
            for _ in 0..spec.dropout.spurious_per_frame {
                let [w, h] = intr.sensor_size.unwrap_or([2 * intr.cx as u32, 2 * intr.cy as u32]);
                centers.push(Vector2::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)));
            }
            centers.shuffle(&mut rng);
            if observed.len() == points.len() {
                patterns[cam].push(
                    GridPattern::new(board, stamps[cam], observed).map_err(|e| ScenarioError::Invalid(e.to_string()))?,
                );
            }
            frames[cam].push(EllipseFrame {
                timestamp: stamps[cam],
                centers,
            });
        }
        if all_visible {
            fully_visible += 1;
        }
    }
    let visible_fraction = fully_visible as f64 / times.len().max(1) as f64;
    if visible_fraction < MIN_VISIBLE_FRACTION {
        return Err(ScenarioError::Visibility {
            fraction: visible_fraction,
            required: MIN_VISIBLE_FRACTION,
        });
    }
    let [fa, fb] = frames;
    let [pa, pb] = patterns;
    let stream = |cam: usize, frames: Vec<EllipseFrame>, pats: Vec<GridPattern>| -> Result<CameraStream, ScenarioError> {
        Ok(CameraStream {
            intrinsics: spec.intrinsics[cam],
            frames,
            patterns: PatternTrack::new(pats).map_err(|e| ScenarioError::Invalid(e.to_string()))?,
        })
    };
    Ok(GroundTruthBundle {
        spec: spec.clone(),
        trajectory,
        streams: [stream(0, fa, pa)?, stream(1, fb, pb)?],
        truth,
        visible_fraction,
    })
}

/// Errors of an estimate of camera B w.r.t. camera A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    /// Geodesic angle of `R_trueᵀ R_est`, degrees.
    pub rotation_deg: f64,
    /// Intrinsic X-Y-Z Euler angles of `R_trueᵀ R_est`, degrees.
    pub rotation_euler_deg: [f64; 3],
    /// `t_est − t_true`, centimeters.
    pub translation_cm: [f64; 3],
    /// `offset_est − offset_true`, milliseconds.
    pub offset_ms: f64,
}

pub fn evaluate(estimate: &SpatiotemporalParams, truth: &SpatiotemporalParams) -> ErrorMetrics {
    let err = truth.rotation.inverse().compose(&estimate.rotation);
    let d = estimate.translation - truth.translation;
    ErrorMetrics {
        rotation_deg: truth.rotation.angle_to(&estimate.rotation).to_degrees(),
        rotation_euler_deg: err.to_euler_xyz().map(f64::to_degrees),
        translation_cm: [d.x * 100.0, d.y * 100.0, d.z * 100.0],
        offset_ms: (estimate.time_offset - truth.time_offset) * 1e3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (zero for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.*} ± {:.*}", p, self.mean, p, self.std)
    }
}

/// Estimates aggregated over runs: Euler angles in degrees, translation in
/// centimeters, offset in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub runs: usize,
    pub euler_deg: [MeanStd; 3],
    pub translation_cm: [MeanStd; 3],
    pub offset_ms: MeanStd,
}

pub fn summarize(estimates: &[SpatiotemporalParams]) -> EstimateSummary {
    let col = |f: &dyn Fn(&SpatiotemporalParams) -> f64| MeanStd::of(&estimates.iter().map(f).collect::<Vec<_>>());
    EstimateSummary {
        runs: estimates.len(),
        euler_deg: std::array::from_fn(|i| col(&|p| p.rotation.to_euler_xyz()[i].to_degrees())),
        translation_cm: std::array::from_fn(|i| col(&|p| p.translation[i] * 100.0)),
        offset_ms: col(&|p| p.time_offset * 1e3),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{fit_spline_segment, TimedPose};

    fn short(seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            duration: 3.0,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_detections_are_exact_projections() {
        let spec = ScenarioSpec {
            noise_sigma: 0.0,
            ..short(1)
        };
        let b = generate(&spec).unwrap();
        assert_eq!(b.visible_fraction, 1.0);
        for cam in 0..2 {
            assert_eq!(b.streams[cam].patterns.len(), spec.frame_times().len());
        }
        let x = spec.truth().extrinsic();
        for (k, p) in b.streams[1].patterns.patterns().iter().enumerate().step_by(17) {
            let t = spec.frame_times()[k];
            let pose = spec.trajectory.analytic_pose(t).compose(&x);
            for q in &p.points {
                let expected = project(&pose.inverse_transform_point(&q.board), &spec.intrinsics[1]).unwrap();
                assert_eq!(q.image, expected);
            }
        }
    }

    #[test]
    fn deterministic_streams() {
        let spec = ScenarioSpec {
            dropout: DropoutModel {
                rate: 0.05,
                spurious_per_frame: 2,
                ..Default::default()
            },
            ..short(7)
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.streams, b.streams);
        let c = generate(&ScenarioSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.streams, c.streams);
    }

    #[test]
    fn clock_shift_applied_to_camera_b() {
        let spec = ScenarioSpec {
            time_shift: 0.05,
            ..short(2)
        };
        let b = generate(&spec).unwrap();
        for (fa, fb) in b.streams[0].frames.iter().zip(&b.streams[1].frames) {
            assert_eq!(fb.timestamp, fa.timestamp - 0.050);
        }
        assert_eq!(b.truth.time_offset, 0.05);
    }

    #[test]
    fn dropout_complete_rate_matches_binomial() {
        let rate = 0.03;
        let spec = ScenarioSpec {
            duration: 20.0,
            dropout: DropoutModel {
                rate,
                ..Default::default()
            },
            ..short(3)
        };
        let b = generate(&spec).unwrap();
        let n = spec.frame_times().len() as f64;
        let p = (1.0f64 - rate).powi(21);
        let sigma = (p * (1.0 - p) / n).sqrt();
        for s in &b.streams {
            let empirical = s.patterns.len() as f64 / n;
            assert!((empirical - p).abs() < 3.0 * sigma, "{empirical} vs {p}");
        }
    }

    #[test]
    fn noise_statistics() {
        let spec = ScenarioSpec {
            duration: 30.0,
            noise_sigma: 0.1,
            ..short(4)
        };
        let b = generate(&spec).unwrap();
        let clean = generate(&ScenarioSpec {
            noise_sigma: 0.0,
            ..spec.clone()
        })
        .unwrap();
        let mut errs = Vec::new();
        for (pn, pc) in b.streams[0].patterns.patterns().iter().zip(clean.streams[0].patterns.patterns()) {
            for (a, c) in pn.points.iter().zip(&pc.points) {
                errs.push(a.image - c.image);
            }
        }
        assert!(errs.len() >= 100_000 / 2);
        for axis in 0..2 {
            let v: Vec<f64> = errs.iter().map(|e| e[axis]).collect();
            let ms = MeanStd::of(&v);
            assert!((ms.std - 0.1).abs() < 0.005, "{}", ms.std);
        }
    }

    #[test]
    fn invisible_board_is_rejected() {
        let mut spec = short(5);
        spec.trajectory.origin = [5.0, 5.0, -0.6];
        spec.trajectory.aim = [5.0, 5.0, 0.0];
        assert!(matches!(generate(&spec), Err(ScenarioError::Visibility { .. })));
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&ScenarioSpec {
            duration: 0.0,
            ..short(0)
        })
        .is_err());
        let mut s = short(0);
        s.dropout.rate = 1.5;
        assert!(generate(&s).is_err());
        s = short(0);
        s.noise_sigma = -1.0;
        assert!(generate(&s).is_err());
    }

    #[test]
    fn spline_representation_tracks_recipe() {
        let mut spec = short(0);
        spec.trajectory.representation = Representation::Spline { knot_spacing: 0.05 };
        let traj = TruthTrajectory::build(&spec.trajectory, 0.0, spec.duration).unwrap();
        for &t in spec.frame_times().iter().step_by(13) {
            let a = traj.pose(t).unwrap();
            let b = spec.trajectory.analytic_pose(t);
            assert!((a.translation - b.translation).norm() < 1e-2);
            assert!(a.rotation.angle_to(&b.rotation) < 2e-2);
        }
    }

    #[test]
    fn fit_error_converges_as_knots_refine() {
        let recipe = ScenarioSpec::default().trajectory;
        let run: Vec<TimedPose> = (0..2000)
            .map(|i| {
                let t = i as f64 * 0.005;
                TimedPose {
                    pose: recipe.analytic_pose(t),
                    timestamp: t,
                    pattern: i,
                }
            })
            .collect();
        let rms: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&dt| fit_spline_segment(&run, dt).unwrap().translation_rms)
            .collect();
        assert!(rms[0] / rms[1] >= 4.0 && rms[1] / rms[2] >= 4.0, "{rms:?}");
    }

    #[test]
    fn evaluate_examples() {
        let truth = ScenarioSpec::default().truth();
        let zero = evaluate(&truth, &truth);
        assert!(zero.rotation_deg < 1e-12);
        assert_eq!(zero.translation_cm, [0.0; 3]);
        assert_eq!(zero.offset_ms, 0.0);
        let bumped = SpatiotemporalParams {
            rotation: truth.rotation.compose(&Rotation::exp(&Vector3::new(0.0, 0.0, 0.1f64.to_radians()))),
            ..truth
        };
        let m = evaluate(&bumped, &truth);
        assert!((m.rotation_deg - 0.1).abs() < 1e-9);
        assert!((m.rotation_euler_deg[2] - 0.1).abs() < 1e-9);
        assert!(m.rotation_euler_deg[0].abs() < 1e-9 && m.rotation_euler_deg[1].abs() < 1e-9);
    }

    #[test]
    fn summary_format() {
        let truth = ScenarioSpec::default().truth();
        let mut other = truth;
        other.time_offset += 0.002;
        let s = summarize(&[truth, other]);
        assert_eq!(s.runs, 2);
        assert!((s.offset_ms.mean - 11.0).abs() < 1e-9);
        assert!((s.offset_ms.std - 2f64.sqrt()).abs() < 1e-9);
        assert_eq!(format!("{:.2}", MeanStd { mean: 1.0, std: 0.5 }), "1.00 ± 0.50");
    }
}
