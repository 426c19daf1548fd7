use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose;

pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    Invalid(&'static str),
    #[error("visibility needs at least one watch point")]
    NoWatchPoints,
}

/// Pinhole depth camera. The camera frame looks along +z with +y down; the
/// headset frame uses the same convention, so `mount` is the camera pose
/// in the headset frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraModel {
    /// Degrees.
    pub h_fov: f64,
    /// Degrees.
    pub v_fov: f64,
    /// Meters.
    pub near: f64,
    /// Meters.
    pub far: f64,
    pub mount: Pose,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            h_fov: 87.0,
            v_fov: 58.0,
            near: 0.3,
            far: 3.0,
            // a few centimeters above and ahead of the headset origin
            mount: Pose::from_translation(0.0, -0.06, 0.03),
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(CameraError::Invalid("need 0 < near < far"));
        }
        if !(self.h_fov > 0.0 && self.h_fov < 180.0 && self.v_fov > 0.0 && self.v_fov < 180.0) {
            return Err(CameraError::Invalid("field of view must be in (0, 180) degrees"));
        }
        if !self.mount.is_finite() {
            return Err(CameraError::Invalid("mount pose is not finite"));
        }
        Ok(())
    }

    /// Camera world pose for a given headset world pose.
    pub fn world_pose(&self, headset: &Pose) -> Pose {
        headset.compose(&self.mount)
    }

    /// Frustum test for a point already in the camera frame.
    pub fn sees(&self, p: &Vector3<f64>) -> bool {
        let tx = (self.h_fov.to_radians() / 2.0).tan();
        let ty = (self.v_fov.to_radians() / 2.0).tan();
        p.z >= self.near && p.z <= self.far && (p.x / p.z).abs() <= tx && (p.y / p.z).abs() <= ty
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Visibility {
    pub fraction: f64,
    pub lost: bool,
}

/// Fraction of world-frame `points` inside the frustum of a camera at
/// `camera_pose`; `lost` when that fraction is below `threshold`.
pub fn check_visibility(
    camera_pose: &Pose,
    cam: &CameraModel,
    points: &[Vector3<f64>],
    threshold: f64,
) -> Result<Visibility, CameraError> {
    if points.is_empty() {
        return Err(CameraError::NoWatchPoints);
    }
    let visible = points
        .iter()
        .filter(|p| cam.sees(&camera_pose.inverse_transform_point(p)))
        .count();
    let fraction = visible as f64 / points.len() as f64;
    Ok(Visibility {
        fraction,
        lost: fraction < threshold,
    })
}
