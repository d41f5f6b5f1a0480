//! Rigid-body math shared by the rest of the crate.
//!
//! Only the fixed shapes the controller and simulator need are exposed:
//! 3-vectors, unit quaternions, 6-vectors, 7-vectors and the 6×7 Jacobian.

use nalgebra::{Quaternion, SMatrix, SVector, UnitQuaternion, Vector3, Vector6};
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Vec7 = SVector<f64, 7>;
pub type Jacobian = SMatrix<f64, 6, 7>;
pub type Quat = UnitQuaternion<f64>;

/// Position plus orientation of a frame expressed in a parent frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose6 {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose6 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6 {
    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Quat::identity(),
        }
    }

    /// Builds a pose, renormalizing the quaternion `(w, x, y, z)`.
    pub fn new(position: Vec3, orientation: Quaternion<f64>) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::new_normalize(orientation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vec3::new(x, y, z),
            orientation: Quat::identity(),
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: quat_exp(&(axis.normalize() * angle)),
        }
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose6) -> Pose6 {
        let q = self.orientation.into_inner() * other.orientation.into_inner();
        Pose6 {
            position: self.position + self.orientation * other.position,
            orientation: UnitQuaternion::new_normalize(q),
        }
    }

    pub fn inverse(&self) -> Pose6 {
        let inv = self.orientation.inverse();
        Pose6 {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    /// `(w, x, y, z)` components.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.quat_wxyz().iter().all(|v| v.is_finite())
    }
}

/// Serializable form of a pose used in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseConfig {
    pub position: [f64; 3],
    /// `(w, x, y, z)`
    pub orientation: [f64; 4],
}

impl From<PoseConfig> for Pose6 {
    fn from(c: PoseConfig) -> Self {
        let [w, x, y, z] = c.orientation;
        Pose6::new(Vec3::from(c.position), Quaternion::new(w, x, y, z))
    }
}

impl From<Pose6> for PoseConfig {
    fn from(p: Pose6) -> Self {
        PoseConfig {
            position: p.position.into(),
            orientation: p.quat_wxyz(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn to_vec6(&self) -> Vec6 {
        Vec6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.force
            .iter()
            .chain(self.torque.iter())
            .all(|v| v.is_finite())
    }
}

/// Task-space tracking error, `desired − actual`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PoseError {
    pub translational: Vec3,
    /// Axis-angle of `desired ⊗ actual⁻¹`, magnitude in `[0, π]`.
    pub rotational: Vec3,
}

impl PoseError {
    pub fn to_vec6(&self) -> Vec6 {
        Vec6::new(
            self.translational.x,
            self.translational.y,
            self.translational.z,
            self.rotational.x,
            self.rotational.y,
            self.rotational.z,
        )
    }
}

pub fn pose_error(desired: &Pose6, actual: &Pose6) -> PoseError {
    let rel = desired.orientation.into_inner() * actual.orientation.inverse().into_inner();
    PoseError {
        translational: desired.position - actual.position,
        rotational: quat_log(&UnitQuaternion::new_normalize(rel)),
    }
}

/// Logarithm of a unit quaternion as a rotation vector (axis × angle).
///
/// `q` and `-q` map to the same vector; the angle is always in `[0, π]`.
pub fn quat_log(q: &Quat) -> Vec3 {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let s = v.norm();
    if s < 1e-12 {
        // first-order: angle ≈ 2 s, axis = v / s
        return v * 2.0;
    }
    let angle = 2.0 * Float::atan2(s, w);
    v * (angle / s)
}

pub fn quat_exp(r: &Vec3) -> Quat {
    let angle = r.norm();
    if angle < 1e-12 {
        let q = Quaternion::new(1.0, r.x * 0.5, r.y * 0.5, r.z * 0.5);
        return UnitQuaternion::new_normalize(q);
    }
    let half = angle * 0.5;
    let s = Float::sin(half) / angle;
    UnitQuaternion::new_normalize(Quaternion::new(Float::cos(half), r.x * s, r.y * s, r.z * s))
}

/// Spherical interpolation between two orientations, `t ∈ [0, 1]`.
pub fn slerp(a: &Quat, b: &Quat, t: f64) -> Quat {
    let rel = b.into_inner() * a.inverse().into_inner();
    let r = quat_log(&UnitQuaternion::new_normalize(rel));
    let step = quat_exp(&(r * t));
    UnitQuaternion::new_normalize(step.into_inner() * a.into_inner())
}

pub fn rot_x(angle: f64) -> Quat {
    quat_exp(&Vec3::new(angle, 0.0, 0.0))
}

pub fn rot_z(angle: f64) -> Quat {
    quat_exp(&Vec3::new(0.0, 0.0, angle))
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b)
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    a.cross(b)
}

/// `J · dq`
pub fn jacobian_mul(j: &Jacobian, dq: &Vec7) -> Vec6 {
    j * dq
}

/// `Jᵀ · w`
pub fn jacobian_transpose_mul(j: &Jacobian, w: &Vec6) -> Vec7 {
    j.tr_mul(w)
}

pub fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::from(a)
}

pub fn vec7(a: [f64; 7]) -> Vec7 {
    Vec7::from(a)
}
