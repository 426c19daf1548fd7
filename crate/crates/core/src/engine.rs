//! Per-tick pipeline: retarget, solve, rate-limit, check, display.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    clamp_joint_step, frame_pose, solve_fingertip_ik, solve_frame_ik, Embodiment, IkParams, JointConfig,
    KinematicsError, ModelError, Pose, RobotModel,
};
use crate::retargeting::{
    retarget_dex_hand, retarget_parallel_gripper, EmbodimentTarget, GripperCommand, GripperState, HandFrame,
    HandFrameError, DEFAULT_OPEN_WIDTH, DEFAULT_TOGGLE_PERIOD,
};
use crate::scene::{
    blink_phase, check_collision, check_visibility, detect_speed_mismatch, CameraError, CameraModel,
    FeedbackDisplay, FeedbackEvent, VoxelGrid, DEFAULT_MARGIN, DEFAULT_RESOLUTION,
    DEFAULT_SPEED_ORIENTATION_THRESHOLD, DEFAULT_SPEED_POSITION_THRESHOLD, DEFAULT_VISIBILITY_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("frame at t={got} does not follow t={last}")]
    OutOfOrder { last: f64, got: f64 },
    #[error(transparent)]
    Frame(#[from] HandFrameError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GripperConfig {
    /// Meters of index-thumb separation above which the gripper opens.
    pub open_width: f64,
    /// Minimum seconds between state changes.
    pub toggle_period: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        GripperConfig {
            open_width: DEFAULT_OPEN_WIDTH,
            toggle_period: DEFAULT_TOGGLE_PERIOD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollisionConfig {
    /// Voxel edge, meters.
    pub resolution: f64,
    /// Extra clearance, meters.
    pub margin: f64,
    /// Grid origin in the world frame.
    pub origin: [f64; 3],
}

impl Default for CollisionConfig {
    fn default() -> Self {
        CollisionConfig {
            resolution: DEFAULT_RESOLUTION,
            margin: DEFAULT_MARGIN,
            origin: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    /// Meters.
    pub position_threshold: f64,
    /// Radians.
    pub orientation_threshold: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        SpeedConfig {
            position_threshold: DEFAULT_SPEED_POSITION_THRESHOLD,
            orientation_threshold: DEFAULT_SPEED_ORIENTATION_THRESHOLD,
        }
    }
}

/// Axis-aligned world-frame box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CropBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for CropBox {
    fn default() -> Self {
        CropBox {
            min: [0.2, -0.4, 0.0],
            max: [0.8, 0.4, 0.5],
        }
    }
}

impl CropBox {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn corners(&self) -> Vec<[f64; 3]> {
        (0..8)
            .map(|i| {
                [0, 1, 2].map(|k| if i >> k & 1 == 0 { self.min[k] } else { self.max[k] })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Built-in model name (optionally `builtin:`-prefixed) or model file path.
    pub model: String,
    /// When set, must match the model's embodiment.
    pub embodiment: Option<Embodiment>,
    pub ik: IkParams,
    pub gripper: GripperConfig,
    pub camera: CameraModel,
    pub collision: CollisionConfig,
    pub speed: SpeedConfig,
    pub visibility_threshold: f64,
    /// Hz.
    pub tick_rate: f64,
    pub workspace: CropBox,
    /// Virtual robot base in the world frame.
    pub base: Pose,
    /// World points the camera should keep in view; defaults to the
    /// workspace corners.
    pub watch_points: Option<Vec<[f64; 3]>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            model: "builtin:panda_leap".into(),
            embodiment: None,
            ik: IkParams::default(),
            gripper: GripperConfig::default(),
            camera: CameraModel::default(),
            collision: CollisionConfig::default(),
            speed: SpeedConfig::default(),
            visibility_threshold: DEFAULT_VISIBILITY_THRESHOLD,
            tick_rate: 60.0,
            workspace: CropBox::default(),
            base: Pose::identity(),
            watch_points: None,
        }
    }
}

impl EngineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, EngineError> {
        let c: EngineConfig = toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = std::fs::read_to_string(path).map_err(|e| EngineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::Config(m.to_string()));
        if !(self.tick_rate > 0.0 && self.tick_rate.is_finite()) {
            return bad("tick_rate must be > 0");
        }
        if !(0..3).all(|k| self.workspace.min[k] <= self.workspace.max[k]) {
            return bad("workspace corners must be ordered per axis");
        }
        if !(self.gripper.open_width > 0.0 && self.gripper.toggle_period >= 0.0) {
            return bad("gripper open_width must be > 0 and toggle_period >= 0");
        }
        if !(self.collision.resolution > 0.0 && self.collision.margin >= 0.0) {
            return bad("collision resolution must be > 0 and margin >= 0");
        }
        if !(self.speed.position_threshold > 0.0 && self.speed.orientation_threshold > 0.0) {
            return bad("speed thresholds must be > 0");
        }
        if !(0.0..=1.0).contains(&self.visibility_threshold) {
            return bad("visibility_threshold must be in [0, 1]");
        }
        if !self.base.is_finite() {
            return bad("base pose must be finite");
        }
        if self.watch_points.as_ref().is_some_and(|w| w.is_empty()) {
            return bad("watch_points must not be empty");
        }
        self.ik.validate()?;
        self.camera.validate()?;
        Ok(())
    }

    pub fn watch_points(&self) -> Vec<Vector3<f64>> {
        self.watch_points
            .clone()
            .unwrap_or_else(|| self.workspace.corners())
            .into_iter()
            .map(Vector3::from)
            .collect()
    }

    pub fn resolve_model(&self) -> Result<RobotModel, EngineError> {
        let model = RobotModel::load(&self.model)?;
        if let Some(e) = self.embodiment {
            if e != model.embodiment() {
                return Err(EngineError::Config(format!(
                    "embodiment {e:?} does not match model '{}' ({:?})",
                    model.name(),
                    model.embodiment()
                )));
            }
        }
        Ok(model)
    }
}

/// Returns `config` with the virtual robot moved to `base`. Engine state
/// built for the old base must be reset.
pub fn place_virtual_robot(config: &EngineConfig, base: Pose) -> EngineConfig {
    EngineConfig {
        base,
        ..config.clone()
    }
}

/// Camera pose in the robot base frame: `T_wb⁻¹ ∘ T_wc`.
pub fn calibrate_extrinsics(t_wb: &Pose, t_wc: &Pose) -> Pose {
    t_wb.inverse().compose(t_wc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub q: JointConfig,
    pub gripper: GripperState,
    pub last_timestamp: Option<f64>,
    pub display: FeedbackDisplay,
    pub blink_phase: u64,
}

impl EngineState {
    pub fn new(model: &RobotModel) -> Self {
        EngineState {
            q: model.rest(),
            gripper: GripperState::default(),
            last_timestamp: None,
            display: FeedbackDisplay::default(),
            blink_phase: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineOutput {
    pub timestamp: f64,
    pub q: JointConfig,
    pub gripper: Option<GripperCommand>,
    /// Tracked end-effector frame (wrist or ee) in the world frame.
    pub ee_pose: Pose,
    pub events: Vec<FeedbackEvent>,
    pub display: FeedbackDisplay,
    pub blink_phase: u64,
    pub lagging: bool,
}

/// Immutable per-session context: configuration, resolved model and scene.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    model: Arc<RobotModel>,
    grid: Arc<VoxelGrid>,
    watch: Vec<Vector3<f64>>,
}

impl Engine {
    pub fn new(config: EngineConfig, model: Arc<RobotModel>, grid: Arc<VoxelGrid>) -> Result<Self, EngineError> {
        config.validate()?;
        if let Some(e) = config.embodiment {
            if e != model.embodiment() {
                return Err(EngineError::Config(format!("embodiment {e:?} does not match the model")));
            }
        }
        let watch = config.watch_points();
        Ok(Engine {
            config,
            model,
            grid,
            watch,
        })
    }

    /// Resolves the configured model and starts with an empty scene.
    pub fn from_config(config: EngineConfig) -> Result<Self, EngineError> {
        let model = Arc::new(config.resolve_model()?);
        let grid = Arc::new(VoxelGrid::empty(
            config.collision.origin.into(),
            config.collision.resolution,
        ));
        Self::new(config, model, grid)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<RobotModel> {
        &self.model
    }

    pub fn grid(&self) -> &Arc<VoxelGrid> {
        &self.grid
    }

    pub fn with_grid(&self, grid: Arc<VoxelGrid>) -> Engine {
        Engine {
            grid,
            ..self.clone()
        }
    }

    pub fn with_base(&self, base: Pose) -> Engine {
        Engine {
            config: place_virtual_robot(&self.config, base),
            ..self.clone()
        }
    }

    pub fn initial_state(&self) -> EngineState {
        EngineState::new(&self.model)
    }

    /// Retargets, solves, rate-limits and checks one frame. The first frame
    /// of a stream places the robot directly at its IK solution; later
    /// frames move at most `velocity · dt` per joint.
    pub fn process_frame(
        &self,
        state: &EngineState,
        frame: &HandFrame,
    ) -> Result<(EngineState, EngineOutput), EngineError> {
        frame.validate()?;
        if let Some(last) = state.last_timestamp {
            if !(frame.timestamp > last) {
                return Err(EngineError::OutOfOrder {
                    last,
                    got: frame.timestamp,
                });
            }
        }
        let model = &*self.model;
        let cfg = &self.config;
        let base = cfg.base;
        model.check_dof(&state.q)?;

        let mut gripper = state.gripper;
        let target: EmbodimentTarget = match model.embodiment() {
            Embodiment::DexHand => retarget_dex_hand(frame, &base),
            Embodiment::ParallelGripper => {
                let (t, g) = retarget_parallel_gripper(
                    frame,
                    &state.gripper,
                    cfg.gripper.open_width,
                    cfg.gripper.toggle_period,
                );
                gripper = g;
                t
            }
            Embodiment::Arm => EmbodimentTarget {
                wrist: frame.wrist,
                fingertips: None,
                gripper: None,
            },
        };

        let tracked = model.tracking_frame();
        let wrist_in_base = base.inverse().compose(&target.wrist);
        let wrist_ik = solve_frame_ik(model, tracked, &wrist_in_base, &state.q, &cfg.ik)?;
        let mut q_target = wrist_ik.q;
        if let Some(tips) = &target.fingertips {
            q_target = solve_fingertip_ik(model, tips, &q_target, &cfg.ik)?.q;
        }
        let gripper_dof = model.gripper_dof();
        if let (Some(cmd), Some(d)) = (target.gripper, gripper_dof) {
            let j = model.dof_joint(d);
            q_target[d] = match cmd {
                GripperCommand::Open => j.upper,
                GripperCommand::Closed => j.lower,
            };
        }

        let (q, lagging) = match state.last_timestamp {
            None => (q_target, false),
            Some(last) => {
                let step = clamp_joint_step(&state.q, &q_target, frame.timestamp - last, model)?;
                // Gripper travel is a commanded open/close, not tracking lag.
                let lagging = step.lagging
                    && (0..model.dof()).any(|i| Some(i) != gripper_dof && step.q[i] != q_target[i]);
                (step.q, lagging)
            }
        };

        let mut events = Vec::new();
        let colliding = check_collision(model, &q, &base, &self.grid, cfg.collision.margin)?;
        if !colliding.is_empty() {
            events.push(FeedbackEvent::Collision {
                timestamp: frame.timestamp,
                links: colliding,
            });
        }
        let ee_pose = base.compose(&frame_pose(model, &q, tracked)?);
        let mismatch = detect_speed_mismatch(
            &target.wrist,
            &ee_pose,
            cfg.speed.position_threshold,
            cfg.speed.orientation_threshold,
        );
        if mismatch.is_some() || !wrist_ik.converged {
            events.push(FeedbackEvent::SpeedLimit {
                timestamp: frame.timestamp,
                position_error: target.wrist.position_distance(&ee_pose),
                orientation_error: ee_pose.rotation_error_to(&target.wrist).norm(),
            });
        }
        let camera = cfg.camera.world_pose(&frame.headset);
        let vis = check_visibility(&camera, &cfg.camera, &self.watch, cfg.visibility_threshold)?;
        if vis.lost {
            events.push(FeedbackEvent::VisibilityLoss {
                timestamp: frame.timestamp,
                visible_fraction: vis.fraction,
            });
        }

        let display = FeedbackDisplay::from_events(&events, lagging);
        let phase = blink_phase(frame.timestamp);
        let output = EngineOutput {
            timestamp: frame.timestamp,
            q: q.clone(),
            gripper: target.gripper,
            ee_pose,
            events,
            display,
            blink_phase: phase,
            lagging,
        };
        let next = EngineState {
            q,
            gripper,
            last_timestamp: Some(frame.timestamp),
            display,
            blink_phase: phase,
        };
        Ok((next, output))
    }
}
