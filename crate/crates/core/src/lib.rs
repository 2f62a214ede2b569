//! Continuous-time spatiotemporal calibration of stereo camera rigs.
//!
//! Given timestamped circle-grid detections from two cameras, the calibrator
//! recovers the extrinsic rotation, extrinsic translation and clock offset of
//! one camera with respect to the other:
//!
//! 1. [`tracking`]: complete patterns are extended with incomplete ones using a
//!    three-point Lagrange motion prior; the camera with more patterns becomes
//!    the reference.
//! 2. [`init`]: per-pattern PnP, segmentation of the reference poses into
//!    continuous runs, cumulative B-spline fitting per run, and continuous-time
//!    hand-eye alignment for the extrinsics and time offset.
//! 3. [`pipeline`]: continuous-time bundle adjustment over spline control
//!    points, extrinsics and time offset with Huber-robustified reprojection
//!    residuals.
//!
//! [`simulator`] generates ground-truth stereo detection streams for the whole
//! pipeline, and [`io`] holds the on-disk formats used by the `stcalib` CLI.
//!
//! Time convention: `τ_ref = τ_target + time_offset`.

pub mod geometry;
pub mod init;
pub mod io;
pub mod pipeline;
pub mod simulator;
pub mod solver;
pub mod spline;
pub mod tracking;

pub use geometry::{CameraIntrinsics, Distortion, Pose, Rotation};
pub use init::SpatiotemporalParams;
pub use pipeline::{run_calibration, CalibrationInput, CalibrationResult};
pub use spline::PiecewiseTrajectory;
pub use tracking::{BoardSpec, GridPattern, PatternTrack};
