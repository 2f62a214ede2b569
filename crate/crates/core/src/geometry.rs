//! Rigid-body primitives and the camera projection model.
//!
//! Rotations are stored as unit quaternions and renormalized after every
//! composition so that long chains (spline evaluation, solver retractions)
//! stay on the manifold. Matrix forms are derived on demand.
//!
//! Conventions:
//! - `Pose` is a rigid transform `x_to = R * x_from + t`. Camera poses in this
//!   crate are camera-to-world (`T_w_c`) unless a name says otherwise.
//! - SO(3) perturbations are applied on the right: `R ⊕ δ = R · Exp(δ)`.
//! - The camera model is pinhole + radial-tangential distortion
//!   (`k1, k2, p1, p2`), applied to normalized image coordinates.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this rotation angle the exponential and logarithm use Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Minimum depth (meters) for a point to be considered in front of a camera.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("point is behind the camera (z = {z:.3e} m)")]
    BehindCamera { z: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Skew-symmetric (cross-product) matrix of `v`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(UnitQuaternion::identity())
    }

    /// Builds a rotation from quaternion coefficients, normalizing them.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self(UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    /// Quaternion coefficients `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn unit_quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Exponential map without input validation. Non-finite input yields a
    /// non-finite rotation; use [`so3_exp`] at API boundaries.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let (w, s) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        Self::from_quaternion(w, s * omega.x, s * omega.y, s * omega.z)
    }

    /// Principal logarithm, `‖result‖ ≤ π`.
    ///
    /// At (numerically) π the two candidate axes are disambiguated by making
    /// the largest-magnitude axis component nonnegative.
    pub fn log(&self) -> Vector3<f64> {
        let q = self.0.quaternion();
        let (mut w, mut v) = (q.w, Vector3::new(q.i, q.j, q.k));
        if w < 0.0 {
            w = -w;
            v = -v;
        }
        let n = v.norm();
        if n < SMALL_ANGLE {
            // θ/n = 2/w · (1 − n²/(3w²) + …)
            return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
        }
        let theta = 2.0 * n.atan2(w);
        let mut omega = v * (theta / n);
        if w <= 1e-12 {
            let (imax, _) = omega.iter().enumerate().fold((0, 0.0), |acc, (i, c)| {
                if c.abs() > acc.1 {
                    (i, c.abs())
                } else {
                    acc
                }
            });
            if omega[imax] < 0.0 {
                omega = -omega;
            }
        }
        omega
    }

    /// Composition `self · other`, renormalized.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self(UnitQuaternion::new_normalize(*(self.0 * other.0).quaternion()))
    }

    pub fn inverse(&self) -> Rotation {
        Self(self.0.inverse())
    }

    /// Right retraction `R · Exp(δ)`.
    pub fn retract(&self, delta: &Vector3<f64>) -> Rotation {
        self.compose(&Rotation::exp(delta))
    }

    /// Right-invariant difference: `Log(selfᵀ · other)`.
    pub fn between(&self, other: &Rotation) -> Vector3<f64> {
        self.inverse().compose(other).log()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.transform_vector(v)
    }

    pub fn inverse_rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.inverse_transform_vector(v)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    /// Rotation from a (near-)orthonormal matrix using the largest-diagonal
    /// (Shepperd) quaternion extraction.
    pub fn from_matrix(m: &Matrix3<f64>) -> Rotation {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let candidates = [trace, m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        let largest = (0..4)
            .max_by(|&a, &b| candidates[a].total_cmp(&candidates[b]))
            .unwrap_or(0);
        let (w, x, y, z) = match largest {
            0 => {
                let s = 2.0 * (1.0 + trace).sqrt();
                (
                    0.25 * s,
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(1, 0)] - m[(0, 1)]) / s,
                )
            }
            1 => {
                let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
                (
                    (m[(2, 1)] - m[(1, 2)]) / s,
                    0.25 * s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                )
            }
            2 => {
                let s = 2.0 * (1.0 - m[(0, 0)] + m[(1, 1)] - m[(2, 2)]).sqrt();
                (
                    (m[(0, 2)] - m[(2, 0)]) / s,
                    (m[(0, 1)] + m[(1, 0)]) / s,
                    0.25 * s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                )
            }
            _ => {
                let s = 2.0 * (1.0 - m[(0, 0)] - m[(1, 1)] + m[(2, 2)]).sqrt();
                (
                    (m[(1, 0)] - m[(0, 1)]) / s,
                    (m[(0, 2)] + m[(2, 0)]) / s,
                    (m[(1, 2)] + m[(2, 1)]) / s,
                    0.25 * s,
                )
            }
        };
        Self::from_quaternion(w, x, y, z)
    }

    /// Intrinsic X-Y-Z Euler angles `(roll, pitch, yaw)` in radians, i.e.
    /// `R = Rx(roll) · Ry(pitch) · Rz(yaw)`.
    pub fn to_euler_xyz(&self) -> [f64; 3] {
        let m = self.matrix();
        let pitch = m[(0, 2)].clamp(-1.0, 1.0).asin();
        let roll = (-m[(1, 2)]).atan2(m[(2, 2)]);
        let yaw = (-m[(0, 1)]).atan2(m[(0, 0)]);
        [roll, pitch, yaw]
    }

    pub fn from_euler_xyz(roll: f64, pitch: f64, yaw: f64) -> Rotation {
        Rotation::exp(&Vector3::new(roll, 0.0, 0.0))
            .compose(&Rotation::exp(&Vector3::new(0.0, pitch, 0.0)))
            .compose(&Rotation::exp(&Vector3::new(0.0, 0.0, yaw)))
    }

    /// Geodesic distance to `other`, radians.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.between(other).norm()
    }
}

impl Serialize for Rotation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.quaternion().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rotation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [w, x, y, z] = <[f64; 4]>::deserialize(d)?;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(serde::de::Error::custom("quaternion must be finite and nonzero"));
        }
        Ok(Rotation::from_quaternion(w, x, y, z))
    }
}

/// SO(3) exponential with input validation.
pub fn so3_exp(omega: &Vector3<f64>) -> Result<Rotation, GeometryError> {
    if !omega.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::InvalidArgument(format!(
            "non-finite tangent vector {:?}",
            omega.as_slice()
        )));
    }
    Ok(Rotation::exp(omega))
}

/// SO(3) principal logarithm.
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    r.log()
}

/// Right Jacobian of SO(3): `Exp(φ + δ) ≈ Exp(φ) · Exp(J_r(φ) δ)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-10 {
        return Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    }
    let theta = theta2.sqrt();
    Matrix3::identity() - ((1.0 - theta.cos()) / theta2) * k
        + ((theta - theta.sin()) / (theta2 * theta)) * k * k
}

/// Inverse of [`right_jacobian`].
pub fn right_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-10 {
        return Matrix3::identity() + 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let theta = theta2.sqrt();
    let coeff = 1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin());
    Matrix3::identity() + 0.5 * k + coeff * k * k
}

/// A rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    /// `self · other` with block-matrix semantics.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            translation: -rotation.rotate(&self.translation),
            rotation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(p) + self.translation
    }

    /// `self⁻¹ · p` without forming the inverse.
    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse_rotate(&(p - self.translation))
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn pose_inverse(a: &Pose) -> Pose {
    a.inverse()
}

/// Radial-tangential distortion coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distortion {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl Distortion {
    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }
}

/// Pinhole projection plus radial-tangential distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub distortion: Distortion,
    /// Sensor `[width, height]` in pixels, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensor_size: Option<[u32; 2]>,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        distortion: Distortion,
        sensor_size: Option<[u32; 2]>,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            distortion,
            sensor_size,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let all = [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.distortion.k1,
            self.distortion.k2,
            self.distortion.p1,
            self.distortion.p2,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "non-finite parameter".into(),
            ));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        if let Some([w, h]) = self.sensor_size {
            if self.cx < 0.0 || self.cx > w as f64 || self.cy < 0.0 || self.cy > h as f64 {
                return Err(GeometryError::InvalidIntrinsics(format!(
                    "principal point ({}, {}) outside the {}x{} sensor",
                    self.cx, self.cy, w, h
                )));
            }
        }
        Ok(())
    }

    /// Whether a pixel lies on the declared sensor. Always true without a
    /// sensor size.
    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        match self.sensor_size {
            Some([w, h]) => px.x >= 0.0 && px.y >= 0.0 && px.x < w as f64 && px.y < h as f64,
            None => true,
        }
    }
}

/// Applies radial-tangential distortion to normalized coordinates. The
/// returned homogeneous vector has `z = 1`.
pub fn distort(normalized: &Vector2<f64>, dist: &Distortion) -> Vector3<f64> {
    let (x, y) = (normalized.x, normalized.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + dist.k1 * r2 + dist.k2 * r2 * r2;
    let xd = x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x);
    let yd = y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y;
    Vector3::new(xd, yd, 1.0)
}

fn distort_jacobian(x: f64, y: f64, d: &Distortion) -> Matrix2<f64> {
    let r2 = x * x + y * y;
    let radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
    let drad = d.k1 + 2.0 * d.k2 * r2; // ∂radial/∂x = 2x·drad
    Matrix2::new(
        radial + 2.0 * x * x * drad + 2.0 * d.p1 * y + 6.0 * d.p2 * x,
        2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y,
        2.0 * x * y * drad + 2.0 * d.p1 * x + 2.0 * d.p2 * y,
        radial + 2.0 * y * y * drad + 6.0 * d.p1 * y + 2.0 * d.p2 * x,
    )
}

/// Projects a camera-frame point to pixels: normalize by depth, distort,
/// apply the intrinsic matrix.
pub fn project(point_cam: &Vector3<f64>, intr: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if point_cam.z <= MIN_DEPTH {
        return Err(GeometryError::BehindCamera { z: point_cam.z });
    }
    let n = Vector2::new(point_cam.x / point_cam.z, point_cam.y / point_cam.z);
    let d = distort(&n, &intr.distortion);
    Ok(Vector2::new(intr.fx * d.x + intr.cx, intr.fy * d.y + intr.cy))
}

/// [`project`] together with its 2×3 Jacobian w.r.t. the camera-frame point.
pub fn project_with_jacobian(
    point_cam: &Vector3<f64>,
    intr: &CameraIntrinsics,
) -> Result<(Vector2<f64>, Matrix2x3<f64>), GeometryError> {
    let px = project(point_cam, intr)?;
    let inv_z = 1.0 / point_cam.z;
    let (x, y) = (point_cam.x * inv_z, point_cam.y * inv_z);
    let d_norm = Matrix2x3::new(inv_z, 0.0, -x * inv_z, 0.0, inv_z, -y * inv_z);
    let d_dist = distort_jacobian(x, y, &intr.distortion);
    let k = Matrix2::new(intr.fx, 0.0, 0.0, intr.fy);
    Ok((px, k * d_dist * d_norm))
}
