//! Robot model: a kinematic tree of revolute/prismatic joints with sphere
//! collision geometry and named frames, loaded from `schema = 1` TOML files.
//!
//! File layout (all lengths in meters, angles in radians):
//!
//! ```toml
//! schema = 1
//! name = "planar2"
//! embodiment = "arm"            # arm | dex_hand | parallel_gripper
//! base_link = "base"
//! gripper_joint = "finger"      # parallel_gripper only
//! include = "other_model"       # optional: start from another model
//!
//! [[links]]
//! name = "link1"
//! spheres = [{ center = [0.25, 0.0, 0.0], radius = 0.05 }]
//!
//! [[joints]]
//! name = "joint1"
//! kind = "revolute"             # or "prismatic"; default revolute
//! parent = "base"
//! child = "link1"
//! xyz = [0.0, 0.0, 0.0]         # fixed origin in the parent link frame
//! rpy = [0.0, 0.0, 0.0]         # R = Rz(yaw) Ry(pitch) Rx(roll)
//! axis = [0.0, 0.0, 1.0]
//! limits = [-3.14, 3.14]
//! velocity = 1.0                # rad/s (m/s for prismatic)
//! rest = 0.0                    # rest posture for null-space regulation
//! mimic = { joint = "j", multiplier = -1.0, offset = 0.0 }
//!
//! [frames.ee]
//! link = "link2"
//! xyz = [0.5, 0.0, 0.0]
//!
//! [attach]                      # mount another model's base on a frame
//! model = "leap_hand"
//! frame = "flange"
//! ```

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::pose::Pose;
use super::{JointConfig, KinematicsError, ModelError};

pub const MODEL_SCHEMA: u32 = 1;

const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("planar2", include_str!("../../models/planar2.toml")),
    ("panda_arm", include_str!("../../models/panda_arm.toml")),
    ("leap_hand", include_str!("../../models/leap_hand.toml")),
    ("fin_ray_gripper", include_str!("../../models/fin_ray_gripper.toml")),
    ("panda_leap", include_str!("../../models/panda_leap.toml")),
    ("panda_gripper", include_str!("../../models/panda_gripper.toml")),
];

/// Names of the models compiled into the library.
pub fn builtin_model_names() -> impl Iterator<Item = &'static str> {
    BUILTIN_MODELS.iter().map(|(name, _)| *name)
}

pub fn builtin_model_text(name: &str) -> Option<&'static str> {
    BUILTIN_MODELS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Embodiment {
    /// Bare kinematic chain without a retargetable end effector.
    Arm,
    DexHand,
    ParallelGripper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    #[default]
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub spheres: Vec<Sphere>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mimic {
    /// Degree-of-freedom index this joint follows.
    pub dof: usize,
    pub multiplier: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    pub parent: usize,
    pub child: usize,
    pub origin: Pose,
    pub axis: Unit<Vector3<f64>>,
    pub lower: f64,
    pub upper: f64,
    pub velocity: f64,
    pub rest: f64,
    /// Index into `JointConfig` for actuated joints.
    pub dof: Option<usize>,
    pub mimic: Option<Mimic>,
}

impl Joint {
    /// Joint position for configuration `q`.
    #[inline]
    pub fn value(&self, q: &[f64]) -> f64 {
        match (self.dof, self.mimic) {
            (Some(i), _) => q[i],
            (None, Some(m)) => m.multiplier * q[m.dof] + m.offset,
            (None, None) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub link: usize,
    pub offset: Pose,
}

#[derive(Debug, Clone)]
pub struct RobotModel {
    name: String,
    embodiment: Embodiment,
    base_link: usize,
    links: Vec<Link>,
    /// Topologically ordered: every joint appears after the joint that
    /// produces its parent link.
    joints: Vec<Joint>,
    frames: BTreeMap<String, Frame>,
    /// `dofs[i]` is the joint index of degree of freedom `i`.
    dofs: Vec<usize>,
    gripper_dof: Option<usize>,
    /// Joint indices from the base to each link, root first.
    link_chains: Vec<Vec<usize>>,
    link_index: HashMap<String, usize>,
}

/// Fingertip frames a dexterous hand model must define, in human finger
/// order (thumb, index, middle, ring).
pub const DEX_TIP_FRAMES: [&str; 4] = ["thumb_tip", "index_tip", "middle_tip", "ring_tip"];

/// Frames a parallel-gripper model must define.
pub const GRIPPER_FRAMES: [&str; 4] = ["wrist", "ee", "left_tip", "right_tip"];

impl RobotModel {
    pub fn builtin(name: &str) -> Result<RobotModel, ModelError> {
        let text = builtin_model_text(name).ok_or_else(|| ModelError::Unknown(name.to_string()))?;
        Self::from_toml_str(text, &BuiltinResolver)
    }

    /// Loads a model file; `include`/`attach` names resolve relative to the
    /// file's directory first and fall back to built-in models.
    pub fn from_file(path: impl AsRef<Path>) -> Result<RobotModel, ModelError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &DirResolver { dir })
    }

    /// Accepts either a built-in name or a path to a model file.
    pub fn load(spec: &str) -> Result<RobotModel, ModelError> {
        let name = spec.strip_prefix("builtin:").unwrap_or(spec);
        if builtin_model_text(name).is_some() && !Path::new(spec).exists() {
            Self::builtin(name)
        } else {
            Self::from_file(spec)
        }
    }

    pub fn from_toml_str(text: &str, resolver: &dyn ModelResolver) -> Result<RobotModel, ModelError> {
        let spec = load_spec(text, resolver, 0)?;
        compile(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn embodiment(&self) -> Embodiment {
        self.embodiment
    }

    pub fn dof(&self) -> usize {
        self.dofs.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn base_link(&self) -> usize {
        self.base_link
    }

    pub fn frames(&self) -> &BTreeMap<String, Frame> {
        &self.frames
    }

    pub fn frame(&self, name: &str) -> Result<&Frame, KinematicsError> {
        self.frames
            .get(name)
            .ok_or_else(|| KinematicsError::UnknownFrame(name.to_string()))
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.link_index.get(name).copied()
    }

    /// Actuated joint for degree of freedom `i`.
    pub fn dof_joint(&self, i: usize) -> &Joint {
        &self.joints[self.dofs[i]]
    }

    pub fn dof_names(&self) -> impl Iterator<Item = &str> {
        self.dofs.iter().map(|&j| self.joints[j].name.as_str())
    }

    pub fn dof_index(&self, joint_name: &str) -> Option<usize> {
        self.dofs
            .iter()
            .position(|&j| self.joints[j].name == joint_name)
    }

    pub fn gripper_dof(&self) -> Option<usize> {
        self.gripper_dof
    }

    pub fn lower_limits(&self) -> Vec<f64> {
        self.dofs.iter().map(|&j| self.joints[j].lower).collect()
    }

    pub fn upper_limits(&self) -> Vec<f64> {
        self.dofs.iter().map(|&j| self.joints[j].upper).collect()
    }

    pub fn velocity_limits(&self) -> Vec<f64> {
        self.dofs.iter().map(|&j| self.joints[j].velocity).collect()
    }

    pub fn rest(&self) -> JointConfig {
        JointConfig::new(self.dofs.iter().map(|&j| self.joints[j].rest).collect())
    }

    /// Overrides every velocity limit; used for what-if runs and tests.
    pub fn with_velocity_limit(mut self, limit: f64) -> RobotModel {
        assert!(limit > 0.0);
        for j in &mut self.joints {
            j.velocity = limit;
        }
        self
    }

    pub fn check_dof(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut JointConfig) {
        for (i, v) in q.as_mut_slice().iter_mut().enumerate() {
            let j = self.dof_joint(i);
            *v = v.clamp(j.lower, j.upper);
        }
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.len() == self.dof()
            && q.iter().enumerate().all(|(i, &v)| {
                let j = self.dof_joint(i);
                v >= j.lower && v <= j.upper
            })
    }

    /// Joint indices from the base to `link`, root first.
    pub fn link_chain(&self, link: usize) -> &[usize] {
        &self.link_chains[link]
    }

    /// Degrees of freedom that move `link`, ascending.
    pub fn chain_dofs(&self, link: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.link_chains[link]
            .iter()
            .filter_map(|&j| {
                let joint = &self.joints[j];
                joint.dof.or(joint.mimic.map(|m| m.dof))
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Fingertip frame names for a dexterous hand, else empty.
    pub fn fingertip_frames(&self) -> &'static [&'static str] {
        match self.embodiment {
            Embodiment::DexHand => &DEX_TIP_FRAMES,
            _ => &[],
        }
    }

    /// Frame matched to the retargeted wrist target for this embodiment.
    pub fn tracking_frame(&self) -> &'static str {
        match self.embodiment {
            Embodiment::DexHand => "wrist",
            Embodiment::ParallelGripper | Embodiment::Arm => "ee",
        }
    }
}

/// Supplies model text for `include` and `attach` references.
pub trait ModelResolver {
    fn resolve(&self, name: &str) -> Result<(String, Box<dyn ModelResolver>), ModelError>;
}

pub struct BuiltinResolver;

impl ModelResolver for BuiltinResolver {
    fn resolve(&self, name: &str) -> Result<(String, Box<dyn ModelResolver>), ModelError> {
        builtin_model_text(name)
            .map(|t| (t.to_string(), Box::new(BuiltinResolver) as Box<dyn ModelResolver>))
            .ok_or_else(|| ModelError::Unknown(name.to_string()))
    }
}

struct DirResolver {
    dir: PathBuf,
}

impl ModelResolver for DirResolver {
    fn resolve(&self, name: &str) -> Result<(String, Box<dyn ModelResolver>), ModelError> {
        for candidate in [self.dir.join(name), self.dir.join(format!("{name}.toml"))] {
            if candidate.is_file() {
                let text = std::fs::read_to_string(&candidate).map_err(|e| ModelError::Io {
                    path: candidate.clone(),
                    source: e,
                })?;
                let dir = candidate.parent().map(Path::to_path_buf).unwrap_or_default();
                return Ok((text, Box::new(DirResolver { dir })));
            }
        }
        BuiltinResolver.resolve(name)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: u32,
    name: String,
    embodiment: Option<Embodiment>,
    base_link: Option<String>,
    include: Option<String>,
    gripper_joint: Option<String>,
    #[serde(default)]
    links: Vec<LinkSpec>,
    #[serde(default)]
    joints: Vec<JointSpec>,
    #[serde(default)]
    frames: BTreeMap<String, FrameSpec>,
    attach: Option<AttachSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkSpec {
    name: String,
    #[serde(default)]
    spheres: Vec<SphereSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereSpec {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointSpec {
    name: String,
    #[serde(default)]
    kind: JointKind,
    parent: String,
    child: String,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    limits: [f64; 2],
    velocity: f64,
    rest: Option<f64>,
    mimic: Option<MimicSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct MimicSpec {
    joint: String,
    #[serde(default = "one")]
    multiplier: f64,
    #[serde(default)]
    offset: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameSpec {
    link: String,
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttachSpec {
    model: String,
    frame: String,
}

/// Name-level model after include/attach expansion.
#[derive(Debug, Clone)]
struct Spec {
    name: String,
    embodiment: Embodiment,
    base_link: String,
    gripper_joint: Option<String>,
    links: Vec<(String, Vec<Sphere>)>,
    joints: Vec<JointSpec>,
    /// name -> (link, offset)
    frames: BTreeMap<String, (String, Pose)>,
}

const MAX_INCLUDE_DEPTH: usize = 8;

fn load_spec(text: &str, resolver: &dyn ModelResolver, depth: usize) -> Result<Spec, ModelError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(ModelError::Invalid("include/attach nesting too deep".into()));
    }
    let file: ModelFile = toml::from_str(text)?;
    if file.schema != MODEL_SCHEMA {
        return Err(ModelError::Schema(file.schema));
    }

    let mut spec = match &file.include {
        Some(name) => {
            let (text, sub) = resolver.resolve(name)?;
            load_spec(&text, sub.as_ref(), depth + 1)?
        }
        None => Spec {
            name: file.name.clone(),
            embodiment: Embodiment::Arm,
            base_link: file
                .base_link
                .clone()
                .ok_or_else(|| ModelError::Invalid("base_link is required".into()))?,
            gripper_joint: None,
            links: Vec::new(),
            joints: Vec::new(),
            frames: BTreeMap::new(),
        },
    };
    spec.name = file.name.clone();
    if let Some(e) = file.embodiment {
        spec.embodiment = e;
    }
    if let Some(b) = &file.base_link {
        spec.base_link = b.clone();
    }
    if file.gripper_joint.is_some() {
        spec.gripper_joint = file.gripper_joint.clone();
    }
    for l in &file.links {
        let spheres = l
            .spheres
            .iter()
            .map(|s| Sphere {
                center: Vector3::from(s.center),
                radius: s.radius,
            })
            .collect();
        spec.links.push((l.name.clone(), spheres));
    }
    spec.joints.extend(file.joints.iter().cloned());
    for (name, f) in &file.frames {
        spec.frames
            .insert(name.clone(), (f.link.clone(), Pose::from_xyz_rpy(f.xyz, f.rpy)));
    }

    if let Some(att) = &file.attach {
        let (text, sub) = resolver.resolve(&att.model)?;
        let child = load_spec(&text, sub.as_ref(), depth + 1)?;
        attach(&mut spec, child, &att.frame)?;
    }
    Ok(spec)
}

/// Mounts `child`'s base link rigidly on `frame` of `parent`.
fn attach(parent: &mut Spec, child: Spec, frame: &str) -> Result<(), ModelError> {
    let (mount_link, mount) = parent
        .frames
        .get(frame)
        .cloned()
        .ok_or_else(|| ModelError::Invalid(format!("attach frame '{frame}' not found")))?;
    let child_base = child.base_link.clone();

    for (name, spheres) in child.links {
        if name == child_base {
            let target = parent
                .links
                .iter_mut()
                .find(|(n, _)| *n == mount_link)
                .ok_or_else(|| ModelError::Invalid(format!("unknown link '{mount_link}'")))?;
            target.1.extend(spheres.into_iter().map(|s| Sphere {
                center: mount.transform_point(&s.center),
                radius: s.radius,
            }));
        } else {
            parent.links.push((name, spheres));
        }
    }
    for mut j in child.joints {
        if j.parent == child_base {
            let origin = mount * Pose::from_xyz_rpy(j.xyz, j.rpy);
            j.parent = mount_link.clone();
            j.xyz = origin.position.into();
            let (r, p, y) = origin.orientation.euler_angles();
            j.rpy = [r, p, y];
        }
        parent.joints.push(j);
    }
    // Child frames override same-named parent frames ("ee" moves to the tool).
    for (name, (link, offset)) in child.frames {
        let entry = if link == child_base {
            (mount_link.clone(), mount * offset)
        } else {
            (link, offset)
        };
        parent.frames.insert(name, entry);
    }
    if child.embodiment != Embodiment::Arm {
        parent.embodiment = child.embodiment;
    }
    if child.gripper_joint.is_some() {
        parent.gripper_joint = child.gripper_joint;
    }
    Ok(())
}

fn compile(spec: Spec) -> Result<RobotModel, ModelError> {
    let invalid = |msg: String| ModelError::Invalid(msg);

    let mut link_index = HashMap::new();
    let mut links = Vec::with_capacity(spec.links.len());
    for (name, spheres) in spec.links {
        if link_index.insert(name.clone(), links.len()).is_some() {
            return Err(invalid(format!("duplicate link '{name}'")));
        }
        for s in &spheres {
            if !(s.radius > 0.0) || !s.center.iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("link '{name}' has an invalid sphere")));
            }
        }
        links.push(Link { name, spheres });
    }
    let base_link = *link_index
        .get(&spec.base_link)
        .ok_or_else(|| invalid(format!("base link '{}' not declared", spec.base_link)))?;

    // Children adjacency, and a single parent joint per link.
    let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
    let mut joint_names = HashMap::new();
    for (ji, j) in spec.joints.iter().enumerate() {
        if joint_names.insert(j.name.clone(), ji).is_some() {
            return Err(invalid(format!("duplicate joint '{}'", j.name)));
        }
        if !link_index.contains_key(&j.parent) {
            return Err(invalid(format!("joint '{}': unknown parent '{}'", j.name, j.parent)));
        }
        let c = *link_index
            .get(&j.child)
            .ok_or_else(|| invalid(format!("joint '{}': unknown child '{}'", j.name, j.child)))?;
        if c == base_link {
            return Err(invalid(format!("joint '{}' targets the base link", j.name)));
        }
        if parent_joint[c].replace(ji).is_some() {
            return Err(invalid(format!("link '{}' has two parent joints", j.child)));
        }
        if !(j.limits[0] < j.limits[1]) {
            return Err(invalid(format!("joint '{}': lower limit must be < upper", j.name)));
        }
        if !(j.velocity > 0.0) {
            return Err(invalid(format!("joint '{}': velocity limit must be > 0", j.name)));
        }
        if Vector3::from(j.axis).norm() < 1e-9 {
            return Err(invalid(format!("joint '{}': zero axis", j.name)));
        }
    }

    // Breadth-first order from the base gives a topological joint order and
    // rejects links not connected to the base.
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
    for (ji, j) in spec.joints.iter().enumerate() {
        children[link_index[&j.parent]].push(ji);
    }
    let mut order = Vec::with_capacity(spec.joints.len());
    let mut visited = vec![false; links.len()];
    let mut queue = VecDeque::from([base_link]);
    visited[base_link] = true;
    while let Some(l) = queue.pop_front() {
        for &ji in &children[l] {
            let c = link_index[&spec.joints[ji].child];
            if visited[c] {
                return Err(invalid("joint graph contains a cycle".into()));
            }
            visited[c] = true;
            order.push(ji);
            queue.push_back(c);
        }
    }
    if let Some(l) = visited.iter().position(|v| !v) {
        return Err(invalid(format!(
            "link '{}' is not connected to the base",
            links[l].name
        )));
    }

    // Actuated joints get degrees of freedom in declaration order.
    let mut dof_of_spec = vec![None; spec.joints.len()];
    let mut n_dof = 0;
    for (ji, j) in spec.joints.iter().enumerate() {
        if j.mimic.is_none() {
            dof_of_spec[ji] = Some(n_dof);
            n_dof += 1;
        }
    }

    let mut joints = Vec::with_capacity(order.len());
    for &ji in &order {
        let j = &spec.joints[ji];
        let mimic = match &j.mimic {
            Some(m) => {
                let master = *joint_names
                    .get(&m.joint)
                    .ok_or_else(|| invalid(format!("joint '{}' mimics unknown '{}'", j.name, m.joint)))?;
                let dof = dof_of_spec[master]
                    .ok_or_else(|| invalid(format!("joint '{}' mimics a mimic joint", j.name)))?;
                Some(Mimic {
                    dof,
                    multiplier: m.multiplier,
                    offset: m.offset,
                })
            }
            None => None,
        };
        let rest = j.rest.unwrap_or(0.0).clamp(j.limits[0], j.limits[1]);
        joints.push(Joint {
            name: j.name.clone(),
            kind: j.kind,
            parent: link_index[&j.parent],
            child: link_index[&j.child],
            origin: Pose::from_xyz_rpy(j.xyz, j.rpy),
            axis: Unit::new_normalize(Vector3::from(j.axis)),
            lower: j.limits[0],
            upper: j.limits[1],
            velocity: j.velocity,
            rest,
            dof: dof_of_spec[ji],
            mimic,
        });
    }
    let mut dofs = vec![0; n_dof];
    for (pos, j) in joints.iter().enumerate() {
        if let Some(d) = j.dof {
            dofs[d] = pos;
        }
    }

    let mut link_chains: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
    for (pos, j) in joints.iter().enumerate() {
        let mut chain = link_chains[j.parent].clone();
        chain.push(pos);
        link_chains[j.child] = chain;
    }

    let mut frames = BTreeMap::new();
    for (name, (link, offset)) in spec.frames {
        let li = *link_index
            .get(&link)
            .ok_or_else(|| invalid(format!("frame '{name}' references unknown link '{link}'")))?;
        frames.insert(name, Frame { link: li, offset });
    }

    let required: &[&str] = match spec.embodiment {
        Embodiment::Arm => &[],
        Embodiment::DexHand => &["wrist", "thumb_tip", "index_tip", "middle_tip", "ring_tip"],
        Embodiment::ParallelGripper => &GRIPPER_FRAMES,
    };
    for f in required {
        if !frames.contains_key(*f) {
            return Err(invalid(format!("{:?} model is missing frame '{f}'", spec.embodiment)));
        }
    }
    let gripper_dof = match (spec.embodiment, &spec.gripper_joint) {
        (Embodiment::ParallelGripper, Some(name)) => {
            let ji = *joint_names
                .get(name)
                .ok_or_else(|| invalid(format!("gripper joint '{name}' not found")))?;
            Some(dof_of_spec[ji].ok_or_else(|| invalid("gripper joint cannot be a mimic".into()))?)
        }
        (Embodiment::ParallelGripper, None) => {
            return Err(invalid("parallel_gripper model needs gripper_joint".into()))
        }
        _ => None,
    };

    Ok(RobotModel {
        name: spec.name,
        embodiment: spec.embodiment,
        base_link,
        links,
        joints,
        frames,
        dofs,
        gripper_dof,
        link_chains,
        link_index,
    })
}
