//! Kinematic models, forward kinematics, damped-least-squares IK with
//! null-space posture regulation, and per-joint velocity clamping.

mod ik;
mod model;
mod pose;

use std::collections::BTreeMap;
use std::ops::{Deref, DerefMut};
use std::path::PathBuf;

use nalgebra::{DMatrix, Isometry3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ik::{
    solve_fingertip_ik, solve_frame_ik, FingertipIkResult, FrameIkResult, IkParams, Residual,
};
pub use model::{
    builtin_model_names, builtin_model_text, BuiltinResolver, Embodiment, Frame, Joint, JointKind,
    Link, Mimic, ModelResolver, RobotModel, Sphere, DEX_TIP_FRAMES, GRIPPER_FRAMES, MODEL_SCHEMA,
};
pub use pose::Pose;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, model has {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown frame '{0}'")]
    UnknownFrame(String),
    #[error("'{0}' is not a fingertip frame of a dexterous hand model")]
    NotFingertip(String),
    #[error("initial configuration violates joint limits at joint '{0}'")]
    OutOfLimits(String),
    #[error("invalid IK parameters: {0}")]
    InvalidParams(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("failed to parse model: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported model schema {0} (expected {MODEL_SCHEMA})")]
    Schema(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("unknown model '{0}'")]
    Unknown(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Joint angles in radians (meters for prismatic joints), one entry per
/// degree of freedom of the owning model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        JointConfig(angles)
    }

    pub fn zeros(n: usize) -> Self {
        JointConfig(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for JointConfig {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointConfig {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(v: Vec<f64>) -> Self {
        JointConfig(v)
    }
}

/// World transforms of every link and of every joint frame (parent link
/// composed with the joint's fixed origin, before joint motion).
#[derive(Debug, Clone)]
pub struct LinkPoses {
    pub links: Vec<Isometry3<f64>>,
    pub joint_frames: Vec<Isometry3<f64>>,
}

impl LinkPoses {
    pub fn frame(&self, frame: &Frame) -> Isometry3<f64> {
        self.links[frame.link] * frame.offset.to_isometry()
    }
}

/// Unchecked forward pass; `q.len()` must equal `model.dof()`.
pub fn link_poses(model: &RobotModel, q: &[f64]) -> LinkPoses {
    let mut links = vec![Isometry3::identity(); model.links().len()];
    let mut joint_frames = Vec::with_capacity(model.joints().len());
    for j in model.joints() {
        let jf = links[j.parent] * j.origin.to_isometry();
        let v = j.value(q);
        let motion = match j.kind {
            JointKind::Revolute => {
                Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&j.axis, v))
            }
            JointKind::Prismatic => Isometry3::from_parts(
                Translation3::from(j.axis.into_inner() * v),
                UnitQuaternion::identity(),
            ),
        };
        links[j.child] = jf * motion;
        joint_frames.push(jf);
    }
    LinkPoses {
        links,
        joint_frames,
    }
}

/// Pose of every named frame relative to the model base.
pub fn forward_kinematics(
    model: &RobotModel,
    q: &JointConfig,
) -> Result<BTreeMap<String, Pose>, KinematicsError> {
    model.check_dof(q)?;
    let lp = link_poses(model, q);
    Ok(model
        .frames()
        .iter()
        .map(|(name, f)| (name.clone(), Pose::from_isometry(&lp.frame(f))))
        .collect())
}

pub fn frame_pose(model: &RobotModel, q: &JointConfig, frame: &str) -> Result<Pose, KinematicsError> {
    model.check_dof(q)?;
    let f = model.frame(frame)?;
    Ok(Pose::from_isometry(&link_poses(model, q).frame(f)))
}

/// Geometric Jacobian of `frame` with respect to the degrees of freedom in
/// `dofs`. Rows 0..3 are linear velocity, rows 3..6 angular velocity, both
/// in the base frame.
pub fn frame_jacobian(
    model: &RobotModel,
    q: &JointConfig,
    frame: &str,
    dofs: &[usize],
) -> Result<DMatrix<f64>, KinematicsError> {
    model.check_dof(q)?;
    let f = model.frame(frame)?;
    let lp = link_poses(model, q);
    Ok(jacobian_from_poses(model, &lp, f, dofs))
}

pub(crate) fn jacobian_from_poses(
    model: &RobotModel,
    lp: &LinkPoses,
    frame: &Frame,
    dofs: &[usize],
) -> DMatrix<f64> {
    let p = lp.frame(frame).translation.vector;
    let mut jac = DMatrix::zeros(6, dofs.len());
    for &ji in model.link_chain(frame.link) {
        let joint = &model.joints()[ji];
        let (dof, scale) = match (joint.dof, joint.mimic) {
            (Some(d), _) => (d, 1.0),
            (None, Some(m)) => (m.dof, m.multiplier),
            (None, None) => continue,
        };
        let Some(col) = dofs.iter().position(|&d| d == dof) else {
            continue;
        };
        let jf = &lp.joint_frames[ji];
        let axis: Vector3<f64> = jf.rotation * joint.axis.into_inner();
        let (lin, ang) = match joint.kind {
            JointKind::Revolute => (axis.cross(&(p - jf.translation.vector)), axis),
            JointKind::Prismatic => (axis, Vector3::zeros()),
        };
        for r in 0..3 {
            jac[(r, col)] += scale * lin[r];
            jac[(r + 3, col)] += scale * ang[r];
        }
    }
    jac
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointStep {
    pub q: JointConfig,
    /// True when at least one joint was velocity-limited.
    pub lagging: bool,
}

/// Moves from `q_prev` toward `q_target`, limiting each joint to
/// `velocity_limit * dt` and to its position limits.
pub fn clamp_joint_step(
    q_prev: &JointConfig,
    q_target: &JointConfig,
    dt: f64,
    model: &RobotModel,
) -> Result<JointStep, KinematicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(KinematicsError::InvalidTimeStep(dt));
    }
    model.check_dof(q_prev)?;
    model.check_dof(q_target)?;
    let mut lagging = false;
    let mut q = Vec::with_capacity(q_prev.len());
    for (i, (&prev, &target)) in q_prev.iter().zip(q_target.iter()).enumerate() {
        let joint = model.dof_joint(i);
        let max_step = joint.velocity * dt;
        let delta = target - prev;
        let step = if delta.abs() > max_step {
            lagging = true;
            max_step.copysign(delta)
        } else {
            delta
        };
        let mut next = (prev + step).clamp(joint.lower, joint.upper);
        // Rounding in `prev + step` can overshoot by an ulp; pull back so the
        // bound holds exactly when re-measured as `next - prev`.
        while (next - prev).abs() > max_step {
            next = if next > prev { next.next_down() } else { next.next_up() };
        }
        q.push(next);
    }
    Ok(JointStep {
        q: JointConfig(q),
        lagging,
    })
}
