use std::path::Path;

use nalgebra::{Point3, Vector3};
use ndarray::{Array1, Array2};

use super::{RecordingError, Session};
use crate::engine::CropBox;
use crate::kinematics::{link_poses, JointConfig, Pose, RobotModel};
use crate::retargeting::GripperCommand;
use crate::scene::{CameraModel, ColoredPointCloud};

pub const DEFAULT_SAMPLES_PER_SPHERE: usize = 64;

/// Colors cycled over links, by link index.
pub const LINK_COLORS: [[u8; 3]; 8] = [
    [230, 230, 230],
    [250, 130, 40],
    [60, 160, 220],
    [120, 200, 80],
    [220, 70, 90],
    [170, 110, 220],
    [240, 210, 60],
    [80, 200, 190],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSource {
    Scene,
    Robot,
}

/// A recorded frame moved to the world frame and cropped, with the
/// virtual robot's visible surface added.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedFrame {
    pub timestamp: f64,
    /// World frame.
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<[u8; 3]>,
    pub sources: Vec<PointSource>,
    pub q: JointConfig,
    pub headset: Pose,
    pub base: Pose,
    pub gripper: Option<GripperCommand>,
    pub events: u8,
}

/// Unit vectors spread evenly over the sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vector3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vector3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

/// World-frame surface samples of the robot's collision spheres that the
/// camera would see: inside the frustum and facing the camera.
pub fn robot_surface_points(
    model: &RobotModel,
    q: &[f64],
    base: &Pose,
    camera_pose: &Pose,
    cam: &CameraModel,
    samples_per_sphere: usize,
) -> Vec<(Vector3<f64>, [u8; 3])> {
    let lattice = fibonacci_sphere(samples_per_sphere);
    let lp = link_poses(model, q);
    let base = base.to_isometry();
    let eye = camera_pose.position;
    let mut out = Vec::new();
    for (li, link) in model.links().iter().enumerate() {
        let pose = base * lp.links[li];
        let color = LINK_COLORS[li % LINK_COLORS.len()];
        for s in &link.spheres {
            let c = (pose * Point3::from(s.center)).coords;
            for n in &lattice {
                let p = c + n * s.radius;
                if n.dot(&(eye - p)) > 0.0 && cam.sees(&camera_pose.inverse_transform_point(&p)) {
                    out.push((p, color));
                }
            }
        }
    }
    out
}

pub fn render_robot_cloud(
    model: &RobotModel,
    q: &[f64],
    base: &Pose,
    camera_pose: &Pose,
    cam: &CameraModel,
    samples_per_sphere: usize,
) -> ColoredPointCloud {
    let mut cloud = ColoredPointCloud::new();
    for (p, c) in robot_surface_points(model, q, base, camera_pose, cam, samples_per_sphere) {
        cloud.push([p.x as f32, p.y as f32, p.z as f32], c);
    }
    cloud
}

/// Moves each recorded cloud to the world frame through the headset pose and
/// camera mount, keeps the points inside `crop`, and appends the virtual
/// robot's visible surface.
pub fn postprocess_session(
    session: &Session,
    crop: &CropBox,
    model: &RobotModel,
    samples_per_sphere: usize,
) -> Result<Vec<ProcessedFrame>, RecordingError> {
    session.require_finalized()?;
    let cam = &session.manifest().config.camera;
    let frames = session.frames()?;
    let mut out = Vec::with_capacity(frames.len());
    for (i, f) in frames.into_iter().enumerate() {
        if f.q.len() != model.dof() {
            return Err(super::frame::corrupt(
                i,
                format!("{} joint angles, model has {}", f.q.len(), model.dof()),
            ));
        }
        let camera = cam.world_pose(&f.headset.renormalized());
        let mut pf = ProcessedFrame {
            timestamp: f.timestamp,
            points: Vec::new(),
            colors: Vec::new(),
            sources: Vec::new(),
            q: f.q,
            headset: f.headset,
            base: f.base,
            gripper: f.gripper,
            events: f.events,
        };
        for (k, p) in f.cloud.iter_f64().enumerate() {
            let w = camera.transform_point(&p);
            if crop.contains(&w) {
                pf.points.push(w);
                pf.colors.push(f.cloud.colors[k]);
                pf.sources.push(PointSource::Scene);
            }
        }
        for (p, c) in robot_surface_points(model, &pf.q, &pf.base.renormalized(), &camera, cam, samples_per_sphere) {
            if crop.contains(&p) {
                pf.points.push(p);
                pf.colors.push(c);
                pf.sources.push(PointSource::Robot);
            }
        }
        out.push(pf);
    }
    Ok(out)
}

fn pose_row(p: &Pose) -> [f64; 7] {
    let [w, x, y, z] = p.wxyz();
    [p.position.x, p.position.y, p.position.z, w, x, y, z]
}

/// Writes processed frames as `.npy` arrays under `dir`:
///
/// - `obs/point_cloud.npy`: (M, 7) rows `x y z r g b source` (source 0 =
///   scene, 1 = robot), all frames concatenated
/// - `obs/point_cloud_offsets.npy`: (T + 1,) row offsets per frame
/// - `obs/joint_angles.npy`: (T, dof)
/// - `poses/headset.npy`, `poses/robot_base.npy`: (T, 7) `x y z qw qx qy qz`
/// - `actions/gripper.npy`: (T,) -1 none, 0 closed, 1 open
/// - `timestamps.npy`: (T,)
pub fn export_frames(frames: &[ProcessedFrame], dir: &Path) -> Result<(), RecordingError> {
    let err = |e: &dyn std::fmt::Display| RecordingError::Export(e.to_string());
    for sub in ["obs", "poses", "actions"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| err(&e))?;
    }
    let t = frames.len();
    let total: usize = frames.iter().map(|f| f.points.len()).sum();
    let mut cloud = Array2::<f64>::zeros((total, 7));
    let mut offsets = Array1::<u64>::zeros(t + 1);
    let mut row = 0;
    for (i, f) in frames.iter().enumerate() {
        for ((p, c), s) in f.points.iter().zip(&f.colors).zip(&f.sources) {
            let src = match s {
                PointSource::Scene => 0.0,
                PointSource::Robot => 1.0,
            };
            let vals = [p.x, p.y, p.z, c[0] as f64, c[1] as f64, c[2] as f64, src];
            for (k, v) in vals.into_iter().enumerate() {
                cloud[(row, k)] = v;
            }
            row += 1;
        }
        offsets[i + 1] = row as u64;
    }
    let dof = frames.first().map_or(0, |f| f.q.len());
    if frames.iter().any(|f| f.q.len() != dof) {
        return Err(RecordingError::Export("frames disagree on joint count".into()));
    }
    let joints = Array2::from_shape_fn((t, dof), |(i, j)| frames[i].q[j]);
    let headset = Array2::from_shape_fn((t, 7), |(i, k)| pose_row(&frames[i].headset)[k]);
    let base = Array2::from_shape_fn((t, 7), |(i, k)| pose_row(&frames[i].base)[k]);
    let gripper = Array1::from_iter(frames.iter().map(|f| match f.gripper {
        None => -1i8,
        Some(GripperCommand::Closed) => 0,
        Some(GripperCommand::Open) => 1,
    }));
    let stamps = Array1::from_iter(frames.iter().map(|f| f.timestamp));

    use ndarray_npy::write_npy;
    write_npy(dir.join("obs/point_cloud.npy"), &cloud).map_err(|e| err(&e))?;
    write_npy(dir.join("obs/point_cloud_offsets.npy"), &offsets).map_err(|e| err(&e))?;
    write_npy(dir.join("obs/joint_angles.npy"), &joints).map_err(|e| err(&e))?;
    write_npy(dir.join("poses/headset.npy"), &headset).map_err(|e| err(&e))?;
    write_npy(dir.join("poses/robot_base.npy"), &base).map_err(|e| err(&e))?;
    write_npy(dir.join("actions/gripper.npy"), &gripper).map_err(|e| err(&e))?;
    write_npy(dir.join("timestamps.npy"), &stamps).map_err(|e| err(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_is_unit_and_balanced() {
        let pts = fibonacci_sphere(100);
        assert!(pts.iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
        let mean: Vector3<f64> = pts.iter().sum::<Vector3<f64>>() / 100.0;
        assert!(mean.norm() < 0.02);
    }

    #[test]
    fn sphere_behind_camera_renders_nothing() {
        let m = RobotModel::builtin("panda_arm").unwrap();
        let q = m.rest();
        let cam = CameraModel::default();
        // camera at the origin looking away from the robot
        let eye = Pose::look_at(Vector3::new(-0.5, 0.0, 0.5), Vector3::new(-2.0, 0.0, 0.5), Vector3::z());
        assert!(render_robot_cloud(&m, &q, &Pose::identity(), &eye, &cam, 50).is_empty());
        let toward = Pose::look_at(Vector3::new(1.5, 0.0, 0.6), Vector3::new(0.0, 0.0, 0.4), Vector3::z());
        assert!(!render_robot_cloud(&m, &q, &Pose::identity(), &toward, &cam, 50).is_empty());
    }
}
