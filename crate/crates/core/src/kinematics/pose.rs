use std::ops::Mul;

use nalgebra::{Isometry3, Point3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform: translation in meters plus a unit quaternion.
///
/// Serialized as `{ position = [x, y, z], orientation = [w, x, y, z] }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl From<PoseRepr> for Pose {
    fn from(r: PoseRepr) -> Self {
        let [w, x, y, z] = r.orientation;
        let q = Quaternion::new(w, x, y, z);
        // Stored quaternions are already unit length; renormalizing would
        // perturb bits and break exact round trips.
        let norm = q.norm();
        let orientation = if (norm - 1.0).abs() <= 1e-6 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Pose {
            position: Vector3::from(r.position),
            orientation,
        }
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let q = p.orientation.quaternion();
        PoseRepr {
            position: [p.position.x, p.position.y, p.position.z],
            orientation: [q.w, q.i, q.j, q.k],
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Pose {
            position,
            orientation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Pose::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_axis_angle(position: Vector3<f64>, axis: Vector3<f64>, angle: f64) -> Self {
        Pose::new(
            position,
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle),
        )
    }

    /// Roll/pitch/yaw about fixed x, y, z axes (R = Rz * Ry * Rx).
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Pose::new(
            Vector3::from(xyz),
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    /// Builds a pose from `[w, x, y, z]`, normalizing the quaternion.
    pub fn from_wxyz(position: [f64; 3], wxyz: [f64; 4]) -> Self {
        let [w, x, y, z] = wxyz;
        Pose::new(
            Vector3::from(position),
            UnitQuaternion::new_normalize(Quaternion::new(w, x, y, z)),
        )
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.orientation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse_transform_vector(&(p - self.position))
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Pose {
        Pose::new(iso.translation.vector, iso.rotation)
    }

    /// Rotation vector (log map) taking `self`'s orientation onto `target`'s,
    /// expressed in the world frame.
    pub fn rotation_error_to(&self, target: &Pose) -> Vector3<f64> {
        (target.orientation * self.orientation.inverse()).scaled_axis()
    }

    pub fn position_distance(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Angle of the relative rotation, in `[0, π]`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    /// Same pose with the quaternion rescaled to unit norm. Poses read back
    /// from f32 storage are off by ~1e-8, which rotations would square.
    pub fn renormalized(&self) -> Pose {
        Pose::new(self.position, UnitQuaternion::new_normalize(self.orientation.into_inner()))
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Camera-style pose at `eye` looking at `target`: +z forward, +y along
    /// `-up` (image rows grow downward), +x completing a right-handed frame.
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
        Pose::new(eye, UnitQuaternion::from_rotation_matrix(&rot))
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl Mul<Point3<f64>> for Pose {
    type Output = Point3<f64>;

    fn mul(self, rhs: Point3<f64>) -> Point3<f64> {
        Point3::from(self.transform_point(&rhs.coords))
    }
}
