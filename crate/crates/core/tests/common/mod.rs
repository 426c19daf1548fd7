//! Reference implementations for the test suites, written without the
//! library's own transform code: plain 4x4 matrices, explicit rotation
//! formulas, brute-force loops.
#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use arcap_core::kinematics::{JointKind, Pose, RobotModel};
use arcap_core::scene::CameraModel;

/// Rotation matrix of a (possibly unnormalized) quaternion.
pub fn quat_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    let n = (w * w + x * x + y * y + z * z).sqrt();
    let (w, x, y, z) = (w / n, x / n, y / n, z / n);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rodrigues' formula.
pub fn axis_angle_matrix(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

pub fn homogeneous(rot: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rot);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(t);
    m
}

pub fn pose_matrix(p: &Pose) -> Matrix4<f64> {
    let [w, x, y, z] = p.wxyz();
    homogeneous(&quat_matrix(w, x, y, z), &p.position)
}

pub fn apply(m: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Vector3::new(h.x, h.y, h.z)
}

/// Link transforms by chaining joint matrices in declaration order.
pub fn link_matrices(model: &RobotModel, q: &[f64]) -> Vec<Matrix4<f64>> {
    let mut links = vec![Matrix4::identity(); model.links().len()];
    for j in model.joints() {
        let v = j.value(q);
        let axis = j.axis.into_inner();
        let motion = match j.kind {
            JointKind::Revolute => homogeneous(&axis_angle_matrix(&axis, v), &Vector3::zeros()),
            JointKind::Prismatic => homogeneous(&Matrix3::identity(), &(axis * v)),
        };
        links[j.child] = links[j.parent] * pose_matrix(&j.origin) * motion;
    }
    links
}

/// World position of a named frame.
pub fn frame_position(model: &RobotModel, q: &[f64], base: &Pose, frame: &str) -> Vector3<f64> {
    let f = &model.frames()[frame];
    let m = pose_matrix(base) * link_matrices(model, q)[f.link] * pose_matrix(&f.offset);
    Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)])
}

/// `(link index, world center, radius)` for every collision sphere.
pub fn world_spheres(model: &RobotModel, q: &[f64], base: &Pose) -> Vec<(usize, Vector3<f64>, f64)> {
    let b = pose_matrix(base);
    let links = link_matrices(model, q);
    let mut out = Vec::new();
    for (li, link) in model.links().iter().enumerate() {
        let m = b * links[li];
        for s in &link.spheres {
            out.push((li, apply(&m, &s.center), s.radius));
        }
    }
    out
}

/// Links with a sphere that has some point within `radius + extra`.
pub fn brute_force_links(
    model: &RobotModel,
    q: &[f64],
    base: &Pose,
    points: &[Vector3<f64>],
    extra: f64,
) -> BTreeSet<String> {
    let mut hits = BTreeSet::new();
    for (li, c, r) in world_spheres(model, q, base) {
        if points.iter().any(|p| (p - c).norm() <= r + extra) {
            hits.insert(model.links()[li].name.clone());
        }
    }
    hits
}

/// Pinhole camera on a virtual 1000 x 1000 sensor: the point is seen when
/// its projection lands on the sensor and its depth is within the clip
/// planes. Camera frame is +z forward, +x right, +y down.
pub fn projects_onto_sensor(cam: &CameraModel, camera_pose: &Pose, p_world: &Vector3<f64>) -> bool {
    let world_to_cam = pose_matrix(camera_pose).try_inverse().expect("rigid transform inverts");
    let p = apply(&world_to_cam, p_world);
    if p.z < cam.near || p.z > cam.far {
        return false;
    }
    let size = 1000.0;
    let fx = (size / 2.0) / (cam.h_fov.to_radians() / 2.0).tan();
    let fy = (size / 2.0) / (cam.v_fov.to_radians() / 2.0).tan();
    let u = fx * p.x / p.z + size / 2.0;
    let v = fy * p.y / p.z + size / 2.0;
    (0.0..=size).contains(&u) && (0.0..=size).contains(&v)
}

pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let i = ((sorted.len() as f64 - 1.0) * p).ceil() as usize;
    sorted[i.min(sorted.len() - 1)]
}

pub mod gen {
    use nalgebra::{Unit, UnitQuaternion, Vector3};
    use rand::RngExt;
    use rand_chacha::ChaCha8Rng;

    use arcap_core::engine::EngineOutput;
    use arcap_core::kinematics::{JointConfig, Pose};
    use arcap_core::protocol::{ClientKind, CloudPayload, ErrorCode, Message, RecordStatus, StopMode};
    use arcap_core::retargeting::{Fingertips, GripperCommand, HandFrame};
    use arcap_core::scene::{ColoredPointCloud, FeedbackDisplay, FeedbackEvent, FrameColor};

    pub fn float(rng: &mut ChaCha8Rng) -> f64 {
        match rng.random_range(0..6) {
            0 => 0.0,
            1 => -0.0,
            2 => rng.random_range(-1e-300..1e-300),
            3 => rng.random_range(-1e12..1e12),
            _ => rng.random_range(-10.0..10.0),
        }
    }

    pub fn vec3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::new(float(rng), float(rng), float(rng))
    }

    pub fn pose(rng: &mut ChaCha8Rng) -> Pose {
        let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 1.0);
        Pose::new(
            vec3(rng),
            UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), rng.random_range(-3.0..3.0)),
        )
    }

    pub fn text(rng: &mut ChaCha8Rng) -> String {
        const ALPHABET: &[&str] = &["a", "Z", "0", "_", "-", " ", "\"", "\\", "\n", "é", "✓", "\u{0}", "{", "}"];
        (0..rng.random_range(0..20)).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
    }

    pub fn cloud(rng: &mut ChaCha8Rng) -> ColoredPointCloud {
        let mut c = ColoredPointCloud::new();
        for _ in 0..rng.random_range(0..20) {
            c.push(
                [0, 1, 2].map(|_| rng.random_range(-5.0f32..5.0)),
                [0, 1, 2].map(|_| rng.random_range(0..=255u8)),
            );
        }
        c
    }

    pub fn hand_frame(rng: &mut ChaCha8Rng) -> HandFrame {
        let tip = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        HandFrame {
            timestamp: rng.random_range(0.0..1e6),
            wrist: pose(rng),
            headset: pose(rng),
            fingertips: Fingertips {
                thumb: tip(rng),
                index: tip(rng),
                middle: tip(rng),
                ring: tip(rng),
                pinky: tip(rng),
            },
        }
    }

    fn gripper(rng: &mut ChaCha8Rng) -> Option<GripperCommand> {
        [None, Some(GripperCommand::Open), Some(GripperCommand::Closed)][rng.random_range(0..3)]
    }

    pub fn engine_output(rng: &mut ChaCha8Rng) -> EngineOutput {
        let events = (0..rng.random_range(0..4))
            .map(|_| match rng.random_range(0..3) {
                0 => FeedbackEvent::Collision {
                    timestamp: float(rng),
                    links: (0..rng.random_range(0..3)).map(|_| text(rng)).collect(),
                },
                1 => FeedbackEvent::SpeedLimit {
                    timestamp: float(rng),
                    position_error: float(rng),
                    orientation_error: float(rng),
                },
                _ => FeedbackEvent::VisibilityLoss {
                    timestamp: float(rng),
                    visible_fraction: rng.random_range(0.0..=1.0),
                },
            })
            .collect();
        EngineOutput {
            timestamp: float(rng),
            q: JointConfig::new((0..rng.random_range(0..24)).map(|_| float(rng)).collect()),
            gripper: gripper(rng),
            ee_pose: pose(rng),
            events,
            display: FeedbackDisplay {
                color: [FrameColor::Red, FrameColor::Yellow, FrameColor::Blue][rng.random_range(0..3)],
                blinking: rng.random_bool(0.5),
                haptic: rng.random_bool(0.5),
            },
            blink_phase: rng.random_range(0..u64::MAX),
            lagging: rng.random_bool(0.5),
        }
    }

    pub fn message(rng: &mut ChaCha8Rng) -> Message {
        const KINDS: [ClientKind; 5] =
            [ClientKind::Tracker, ClientKind::Console, ClientKind::Replay, ClientKind::Simulator, ClientKind::Server];
        const CODES: [ErrorCode; 8] = [
            ErrorCode::VersionMismatch,
            ErrorCode::HandshakeRequired,
            ErrorCode::Protocol,
            ErrorCode::Ordering,
            ErrorCode::InvalidFrame,
            ErrorCode::State,
            ErrorCode::Integrity,
            ErrorCode::Internal,
        ];
        match rng.random_range(0..11) {
            0 => Message::Hello {
                protocol_version: rng.random_range(0..u32::MAX),
                client_kind: KINDS[rng.random_range(0..5)],
            },
            1 => Message::SceneUpload { cloud: CloudPayload(cloud(rng)) },
            2 => Message::PlaceRobot { pose: pose(rng) },
            3 => Message::HandFrame {
                frame: hand_frame(rng),
                cloud: rng.random_bool(0.5).then(|| CloudPayload(cloud(rng))),
            },
            4 => Message::EngineOutput {
                output: engine_output(rng),
                dropped: rng.random_range(0..u64::MAX),
            },
            5 => Message::RecordStart {
                session_id: rng.random_bool(0.5).then(|| text(rng)),
            },
            6 => Message::RecordStop {
                mode: if rng.random_bool(0.5) { StopMode::Finalize } else { StopMode::Discard },
            },
            7 => Message::RecordAck {
                session_id: text(rng),
                status: [RecordStatus::Recording, RecordStatus::Finalized, RecordStatus::Discarded][rng.random_range(0..3)],
                frame_count: rng.random_range(0..u64::MAX),
            },
            8 => Message::Calibrate {
                t_wb: pose(rng),
                t_wc: pose(rng),
            },
            9 => Message::CalibrationResult { pose: pose(rng) },
            _ => Message::Error {
                code: CODES[rng.random_range(0..8)],
                text: text(rng),
            },
        }
    }
}
