use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Isometry3, Vector3};
use serde::{Deserialize, Serialize};

use super::{jacobian_from_poses, link_poses, Embodiment, Frame, JointConfig, KinematicsError, Pose, RobotModel};

/// Damped-least-squares solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    /// Damping factor λ; each step solves `(JᵀJ + λ²I) Δq = Jᵀe`.
    pub damping: f64,
    pub max_iterations: usize,
    /// Meters.
    pub position_tolerance: f64,
    /// Radians.
    pub orientation_tolerance: f64,
    /// Fraction of the projected rest-posture error applied per iteration.
    pub nullspace_gain: f64,
    /// Weight of the orientation rows relative to the position rows.
    pub orientation_weight: f64,
    /// Largest change of any joint in one iteration; larger steps are
    /// scaled down uniformly.
    pub max_step: f64,
    /// Largest change of any joint from one posture (null-space) step.
    pub max_posture_step: f64,
    /// Posture the null-space term pulls toward; `None` uses the model's
    /// rest posture.
    pub rest: Option<JointConfig>,
}

impl Default for IkParams {
    fn default() -> Self {
        IkParams {
            damping: 0.05,
            max_iterations: 50,
            position_tolerance: 1e-4,
            orientation_tolerance: 1e-3,
            nullspace_gain: 0.1,
            orientation_weight: 0.5,
            max_step: 0.2,
            max_posture_step: 0.05,
            rest: None,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.damping > 0.0) {
            return Err(KinematicsError::InvalidParams("damping must be > 0"));
        }
        if !(self.position_tolerance > 0.0 && self.orientation_tolerance > 0.0) {
            return Err(KinematicsError::InvalidParams("tolerances must be > 0"));
        }
        if !(0.0..1.0).contains(&self.nullspace_gain) {
            return Err(KinematicsError::InvalidParams("null-space gain must be in [0, 1)"));
        }
        if !(self.orientation_weight > 0.0) {
            return Err(KinematicsError::InvalidParams("orientation weight must be > 0"));
        }
        if !(self.max_step > 0.0 && self.max_posture_step > 0.0) {
            return Err(KinematicsError::InvalidParams("step bounds must be > 0"));
        }
        Ok(())
    }

    fn rest_for(&self, model: &RobotModel) -> Result<JointConfig, KinematicsError> {
        match &self.rest {
            Some(r) => {
                model.check_dof(r)?;
                Ok(r.clone())
            }
            None => Ok(model.rest()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residual {
    /// Meters.
    pub position: f64,
    /// Radians.
    pub orientation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameIkResult {
    pub q: JointConfig,
    pub residual: Residual,
    pub converged: bool,
    /// Task iterations until convergence; posture refinement afterwards
    /// is not counted.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingertipIkResult {
    pub q: JointConfig,
    /// Distance from each tip to its target, meters.
    pub residuals: BTreeMap<String, f64>,
    pub converged: bool,
}

enum Task {
    Pose(Pose),
    Position(Vector3<f64>),
}

struct Solve {
    q: JointConfig,
    residual: Residual,
    converged: bool,
    iterations: usize,
}

/// Solves for `q` placing `frame` at `target` (base-relative), moving only
/// the joints on the frame's chain. Non-convergence is reported through
/// `converged`, never as an error.
pub fn solve_frame_ik(
    model: &RobotModel,
    frame: &str,
    target: &Pose,
    q_init: &JointConfig,
    params: &IkParams,
) -> Result<FrameIkResult, KinematicsError> {
    params.validate()?;
    check_init(model, q_init)?;
    let f = model.frame(frame)?;
    let rest = params.rest_for(model)?;
    let dofs = model.chain_dofs(f.link);
    let s = solve(model, f, &Task::Pose(*target), &dofs, q_init.clone(), &rest, params);
    Ok(FrameIkResult {
        q: s.q,
        residual: s.residual,
        converged: s.converged,
        iterations: s.iterations,
    })
}

/// Solves each finger's own sub-chain (joints below the wrist) for a 3-D tip
/// position. Joints outside the targeted fingers are left untouched.
pub fn solve_fingertip_ik(
    model: &RobotModel,
    targets: &BTreeMap<String, Vector3<f64>>,
    q_init: &JointConfig,
    params: &IkParams,
) -> Result<FingertipIkResult, KinematicsError> {
    params.validate()?;
    check_init(model, q_init)?;
    if model.embodiment() != Embodiment::DexHand {
        if let Some(name) = targets.keys().next() {
            return Err(KinematicsError::NotFingertip(name.clone()));
        }
    }
    let rest = params.rest_for(model)?;
    let wrist_dofs = model.chain_dofs(model.frame("wrist")?.link);

    let mut q = q_init.clone();
    let mut residuals = BTreeMap::new();
    let mut converged = true;
    for (name, target) in targets {
        if !model.fingertip_frames().contains(&name.as_str()) {
            return Err(KinematicsError::NotFingertip(name.clone()));
        }
        let f = model.frame(name)?;
        let dofs: Vec<usize> = model
            .chain_dofs(f.link)
            .into_iter()
            .filter(|d| !wrist_dofs.contains(d))
            .collect();
        let s = solve(model, f, &Task::Position(*target), &dofs, q, &rest, params);
        q = s.q;
        converged &= s.converged;
        residuals.insert(name.clone(), s.residual.position);
    }
    Ok(FingertipIkResult {
        q,
        residuals,
        converged,
    })
}

fn check_init(model: &RobotModel, q: &JointConfig) -> Result<(), KinematicsError> {
    model.check_dof(q)?;
    for (i, &v) in q.iter().enumerate() {
        let j = model.dof_joint(i);
        if !(v >= j.lower && v <= j.upper) {
            return Err(KinematicsError::OutOfLimits(j.name.clone()));
        }
    }
    Ok(())
}

fn solve(
    model: &RobotModel,
    frame: &Frame,
    task: &Task,
    dofs: &[usize],
    mut q: JointConfig,
    rest: &JointConfig,
    params: &IkParams,
) -> Solve {
    let n = dofs.len();
    let w = params.orientation_weight;
    let mut best: Option<(f64, JointConfig, Residual)> = None;
    let mut lp = link_poses(model, &q);
    let scale = length_scale(model, &lp, frame, dofs);
    for iter in 0..=params.max_iterations {
        let (e_pos, e_rot) = task_error(task, &lp.frame(frame));
        let residual = Residual {
            position: e_pos.norm(),
            orientation: e_rot.norm(),
        };
        if residual.position < params.position_tolerance
            && residual.orientation < params.orientation_tolerance
        {
            let spare = params.max_iterations - iter;
            let (q, residual) = refine_posture(model, frame, task, dofs, q, residual, rest, scale, spare, params);
            return Solve {
                q,
                residual,
                converged: true,
                iterations: iter,
            };
        }
        let score = residual.position.powi(2) + (w * residual.orientation).powi(2);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, q.clone(), residual));
        }
        if iter == params.max_iterations || n == 0 {
            break;
        }

        let (jac, err) = weighted_system(model, &lp, frame, task, dofs, scale, w);
        let mut dq = damped_step(&jac, &err, approach_damping(params.damping, err.norm()));
        let largest = dq.amax();
        if largest > params.max_step {
            dq *= params.max_step / largest;
        }
        apply_step(model, &mut q, dofs, &dq);
        lp = link_poses(model, &q);
    }

    let (_, q, residual) = best.expect("at least one iterate is evaluated");
    Solve {
        q,
        residual,
        converged: false,
        iterations: params.max_iterations,
    }
}

/// Task Jacobian and error with position rows divided by `scale` and
/// orientation rows weighted by `w`.
fn weighted_system(
    model: &RobotModel,
    lp: &super::LinkPoses,
    frame: &Frame,
    task: &Task,
    dofs: &[usize],
    scale: f64,
    w: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = dofs.len();
    let (e_pos, e_rot) = task_error(task, &lp.frame(frame));
    let mut jac = jacobian_from_poses(model, lp, frame, dofs);
    for c in 0..n {
        for r in 0..3 {
            jac[(r, c)] /= scale;
        }
        for r in 3..6 {
            jac[(r, c)] *= w;
        }
    }
    let rows = match task {
        Task::Pose(_) => 6,
        Task::Position(_) => 3,
    };
    let jac = jac.rows(0, rows).into_owned();
    let mut err = DVector::zeros(rows);
    for r in 0..3 {
        err[r] = e_pos[r] / scale;
        if rows == 6 {
            err[r + 3] = w * e_rot[r];
        }
    }
    (jac, err)
}

/// `(I − J⁺J)(rest − q)·gain`, capped at `max_posture_step` per joint.
fn posture_step(jac: &DMatrix<f64>, q: &JointConfig, dofs: &[usize], rest: &JointConfig, params: &IkParams) -> DVector<f64> {
    let posture = DVector::from_iterator(dofs.len(), dofs.iter().map(|&d| rest[d] - q[d]));
    let mut dn = nullspace_projector(jac) * posture * params.nullspace_gain;
    let largest = dn.amax();
    if largest > params.max_posture_step {
        dn *= params.max_posture_step / largest;
    }
    dn
}

fn rest_distance(q: &JointConfig, dofs: &[usize], rest: &JointConfig) -> f64 {
    dofs.iter().map(|&d| (q[d] - rest[d]).powi(2)).sum::<f64>().sqrt()
}

/// Once the task is within tolerance, spends the spare iterations moving
/// toward rest: first null-space steps each followed by a task step that
/// undoes their drift, then plain steps toward rest. A round is kept only
/// if the task stays within tolerance and the chain ends strictly nearer
/// rest; a rejected round halves the step length.
#[allow(clippy::too_many_arguments)]
fn refine_posture(
    model: &RobotModel,
    frame: &Frame,
    task: &Task,
    dofs: &[usize],
    mut q: JointConfig,
    mut residual: Residual,
    rest: &JointConfig,
    scale: f64,
    spare: usize,
    params: &IkParams,
) -> (JointConfig, Residual) {
    if params.nullspace_gain == 0.0 || dofs.is_empty() {
        return (q, residual);
    }
    let w = params.orientation_weight;
    let mut dist = rest_distance(&q, dofs, rest);
    let mut shrink = 1.0;
    // Phase 1 walks the solution set through null-space rounds; once those
    // stall, phase 2 pulls straight toward rest inside the tolerance band.
    let mut direct = false;
    for _ in 0..spare {
        if dist < 1e-12 {
            break;
        }
        let mut cand = q.clone();
        if direct {
            let pull = DVector::from_iterator(dofs.len(), dofs.iter().map(|&d| (rest[d] - q[d]) * params.nullspace_gain));
            apply_step(model, &mut cand, dofs, &(pull * shrink));
        } else {
            let lp = link_poses(model, &q);
            let (jac, _) = weighted_system(model, &lp, frame, task, dofs, scale, w);
            let dn = posture_step(&jac, &q, dofs, rest, params) * shrink;
            if dn.amax() < 1e-12 {
                direct = true;
                shrink = 1.0;
                continue;
            }
            apply_step(model, &mut cand, dofs, &dn);
            let lp = link_poses(model, &cand);
            let (jac, err) = weighted_system(model, &lp, frame, task, dofs, scale, w);
            apply_step(model, &mut cand, dofs, &damped_step(&jac, &err, params.damping));
        }
        let (p, r) = task_error(task, &link_poses(model, &cand).frame(frame));
        let d = rest_distance(&cand, dofs, rest);
        if p.norm() < params.position_tolerance && r.norm() < params.orientation_tolerance && d < dist {
            let gain = dist - d;
            q = cand;
            dist = d;
            residual = Residual {
                position: p.norm(),
                orientation: r.norm(),
            };
            if gain < 1e-12 {
                break;
            }
        } else {
            // second-order drift outran the correction; try a shorter step
            shrink *= 0.5;
        }
        if shrink < 1e-3 {
            if direct {
                break;
            }
            direct = true;
            shrink = 1.0;
        }
    }
    (q, residual)
}

/// Position rows are divided by the chain's reach (capped at 1 m) so the
/// damping acts the same on a finger as on an arm.
fn length_scale(model: &RobotModel, lp: &super::LinkPoses, frame: &Frame, dofs: &[usize]) -> f64 {
    let mut points: Vec<Vector3<f64>> = model
        .link_chain(frame.link)
        .iter()
        .filter(|&&ji| {
            let j = &model.joints()[ji];
            j.dof.or(j.mimic.map(|m| m.dof)).is_some_and(|d| dofs.contains(&d))
        })
        .map(|&ji| lp.joint_frames[ji].translation.vector)
        .collect();
    points.push(lp.frame(frame).translation.vector);
    let reach: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    reach.clamp(1e-3, 1.0)
}

fn task_error(task: &Task, current: &Isometry3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    match task {
        Task::Pose(t) => (
            t.position - current.translation.vector,
            (t.orientation * current.rotation.inverse()).scaled_axis(),
        ),
        Task::Position(p) => (p - current.translation.vector, Vector3::zeros()),
    }
}

fn apply_step(model: &RobotModel, q: &mut JointConfig, dofs: &[usize], dq: &DVector<f64>) {
    for (k, &d) in dofs.iter().enumerate() {
        let j = model.dof_joint(d);
        q[d] = (q[d] + dq[k]).clamp(j.lower, j.upper);
    }
}

/// `(JᵀJ + λ²I)⁻¹ Jᵀ e`, evaluated as `Jᵀ (JJᵀ + λ²I)⁻¹ e`.
/// Weighted error below which damping fades in proportion to it.
const DAMPING_FADE: f64 = 0.01;

/// Full damping far from the target; near it, damping shrinks with the
/// error so the last iterations converge like Gauss-Newton instead of
/// crawling along weakly conditioned directions.
fn approach_damping(damping: f64, err: f64) -> f64 {
    damping * (err / DAMPING_FADE).min(1.0)
}

fn damped_step(jac: &DMatrix<f64>, err: &DVector<f64>, damping: f64) -> DVector<f64> {
    let m = jac.nrows();
    let mut jjt = jac * jac.transpose();
    for i in 0..m {
        jjt[(i, i)] += damping * damping;
    }
    let y = jjt
        .cholesky()
        .map(|c| c.solve(err))
        .unwrap_or_else(|| DVector::zeros(m));
    jac.transpose() * y
}

/// `I − J⁺J` with an SVD pseudo-inverse.
fn nullspace_projector(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let n = jac.ncols();
    let pinv = jac
        .clone()
        .pseudo_inverse(1e-9)
        .unwrap_or_else(|_| DMatrix::zeros(n, jac.nrows()));
    DMatrix::identity(n, n) - pinv * jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{forward_kinematics, frame_pose};
    use nalgebra::UnitQuaternion;

    fn planar2() -> RobotModel {
        RobotModel::builtin("planar2").unwrap()
    }

    #[test]
    fn zero_error_returns_initial_configuration() {
        let m = RobotModel::builtin("panda_leap").unwrap();
        let q = m.rest();
        let target = frame_pose(&m, &q, "wrist").unwrap();
        let r = solve_frame_ik(&m, "wrist", &target, &q, &IkParams::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.q, q);
        assert_eq!(r.iterations, 0);
        assert!(r.residual.position < 1e-12);
    }

    #[test]
    fn planar2_reaches_straight_pose() {
        // The straight chain is singular, so convergence along the valley is
        // slow; give the solver room.
        let params = IkParams {
            orientation_weight: 0.05,
            max_iterations: 1000,
            ..IkParams::default()
        };
        let target = Pose::from_translation(1.0, 0.0, 0.0);
        let q0 = JointConfig::new(vec![0.1, -0.1]);
        let r = solve_frame_ik(&planar2(), "ee", &target, &q0, &params).unwrap();
        let reached = frame_pose(&planar2(), &r.q, "ee").unwrap();
        assert!((reached.position - target.position).norm() < 1e-4, "{r:?}");
        assert!(r.q[0].abs() < 1e-2 && r.q[1].abs() < 1e-2, "{r:?}");
    }

    #[test]
    fn planar2_unreachable_target_is_best_effort() {
        let target = Pose::from_translation(3.0, 0.0, 0.0);
        let q0 = JointConfig::new(vec![0.1, -0.1]);
        let r = solve_frame_ik(&planar2(), "ee", &target, &q0, &IkParams::default()).unwrap();
        assert!(!r.converged);
        assert!((r.residual.position - 2.0).abs() < 5e-3, "{r:?}");
    }

    #[test]
    fn converged_solutions_reproduce_target() {
        let m = RobotModel::builtin("panda_arm").unwrap();
        let mut q_goal = m.rest();
        q_goal[0] += 0.3;
        q_goal[3] += 0.2;
        let target = frame_pose(&m, &q_goal, "ee").unwrap();
        let p = IkParams::default();
        let r = solve_frame_ik(&m, "ee", &target, &m.rest(), &p).unwrap();
        assert!(r.converged, "{r:?}");
        let got = frame_pose(&m, &r.q, "ee").unwrap();
        assert!(got.position_distance(&target) < p.position_tolerance);
        assert!(got.angle_to(&target) < p.orientation_tolerance);
        assert!(m.within_limits(&r.q));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = planar2();
        let t = Pose::identity();
        let q = JointConfig::zeros(2);
        assert!(matches!(
            solve_frame_ik(&m, "nope", &t, &q, &IkParams::default()),
            Err(KinematicsError::UnknownFrame(_))
        ));
        assert!(matches!(
            solve_frame_ik(&m, "ee", &t, &JointConfig::new(vec![9.0, 0.0]), &IkParams::default()),
            Err(KinematicsError::OutOfLimits(_))
        ));
        let bad = IkParams {
            nullspace_gain: 1.0,
            ..IkParams::default()
        };
        assert!(matches!(
            solve_frame_ik(&m, "ee", &t, &q, &bad),
            Err(KinematicsError::InvalidParams(_))
        ));
        let targets = BTreeMap::from([("ee".to_string(), Vector3::zeros())]);
        assert!(matches!(
            solve_fingertip_ik(&m, &targets, &q, &IkParams::default()),
            Err(KinematicsError::NotFingertip(_))
        ));
    }

    #[test]
    fn fingertip_targets_at_current_tips_leave_q_unchanged() {
        let m = RobotModel::builtin("leap_hand").unwrap();
        let q = m.rest();
        let fk = forward_kinematics(&m, &q).unwrap();
        let targets: BTreeMap<_, _> = m
            .fingertip_frames()
            .iter()
            .map(|f| (f.to_string(), fk[*f].position))
            .collect();
        let r = solve_fingertip_ik(&m, &targets, &q, &IkParams::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.q, q);
    }

    #[test]
    fn fingertip_solve_leaves_other_joints_alone() {
        let m = RobotModel::builtin("panda_leap").unwrap();
        let q = m.rest();
        let fk = forward_kinematics(&m, &q).unwrap();
        let target = fk["index_tip"].position + Vector3::new(0.0, -0.01, -0.005);
        let targets = BTreeMap::from([("index_tip".to_string(), target)]);
        let r = solve_fingertip_ik(&m, &targets, &q, &IkParams::default()).unwrap();
        assert!(r.converged, "{r:?}");
        let index_dofs: Vec<usize> = m.dof_names().enumerate().filter(|(_, n)| n.starts_with("index_")).map(|(i, _)| i).collect();
        for i in 0..m.dof() {
            if !index_dofs.contains(&i) {
                assert_eq!(r.q[i], q[i], "dof {i} moved");
            }
        }
    }

    #[test]
    fn orientation_only_error_is_corrected() {
        let m = RobotModel::builtin("panda_arm").unwrap();
        let q = m.rest();
        let mut target = frame_pose(&m, &q, "ee").unwrap();
        target.orientation = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.2) * target.orientation;
        let r = solve_frame_ik(&m, "ee", &target, &q, &IkParams::default()).unwrap();
        assert!(r.converged, "{r:?}");
    }
}
