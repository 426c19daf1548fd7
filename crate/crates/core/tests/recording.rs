mod common;

use nalgebra::Vector3;
use ndarray::{Array1, Array2};
use ndarray_npy::read_npy;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arcap_core::engine::{CropBox, EngineConfig};
use arcap_core::kinematics::{JointConfig, Pose, RobotModel};
use arcap_core::protocol::RecordStatus;
use arcap_core::recording::{
    export_frames, postprocess_session, render_robot_cloud, DemoFrame, PointSource, RecordingError, Session,
    SessionWriter, FRAMES_PER_CHUNK,
};
use arcap_core::retargeting::GripperCommand;
use arcap_core::scene::{CameraModel, ColoredPointCloud, FeedbackEvent};

fn random_frame(rng: &mut ChaCha8Rng, t: f64, dof: usize) -> DemoFrame {
    let mut cloud = ColoredPointCloud::new();
    for _ in 0..rng.random_range(0..50) {
        cloud.push(
            [rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0), rng.random_range(0.1f32..2.0)],
            [rng.random_range(0..=255u8), rng.random_range(0..=255u8), rng.random_range(0..=255u8)],
        );
    }
    let mut events = Vec::new();
    if rng.random_bool(0.2) {
        events.push(FeedbackEvent::Collision {
            timestamp: t,
            links: vec!["hand".into()],
        });
    }
    if rng.random_bool(0.1) {
        events.push(FeedbackEvent::SpeedLimit {
            timestamp: t,
            position_error: 0.1,
            orientation_error: 0.0,
        });
    }
    DemoFrame::new(
        t,
        cloud,
        &JointConfig::new((0..dof).map(|_| rng.random_range(-2.0..2.0)).collect()),
        &common::gen::pose(rng),
        &common::gen::pose(rng),
        [None, Some(GripperCommand::Open), Some(GripperCommand::Closed)][rng.random_range(0..3)],
        &events,
    )
}

fn write_session(root: &std::path::Path, id: &str, frames: &[DemoFrame]) -> Session {
    let mut w = SessionWriter::create(root, Some(id), &EngineConfig::default()).unwrap();
    for f in frames {
        w.append(f, None).unwrap();
    }
    w.finalize().unwrap();
    Session::open(w.dir()).unwrap()
}

#[test]
fn frames_read_back_exactly() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let frames: Vec<DemoFrame> = (0..150).map(|k| random_frame(&mut rng, k as f64 / 60.0, 23)).collect();
    let s = write_session(root.path(), "rt", &frames);
    let back = s.frames().unwrap();
    assert_eq!(back, frames);
    for (a, b) in back.iter().zip(&frames) {
        assert_eq!(a.timestamp.to_bits(), b.timestamp.to_bits());
        assert!(a.q.iter().zip(b.q.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let m = s.manifest();
    assert_eq!(m.frame_count, 150);
    assert_eq!(m.chunks.len(), 150usize.div_ceil(FRAMES_PER_CHUNK));
    let collisions = frames.iter().filter(|f| f.events & 1 != 0).count() as u64;
    assert_eq!(m.event_totals.collision, collisions);
}

#[test]
fn corrupt_chunk_names_the_frame() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let frames: Vec<DemoFrame> = (0..150).map(|k| random_frame(&mut rng, k as f64, 9)).collect();
    let s = write_session(root.path(), "bad", &frames);
    let chunk = s.dir().join(&s.manifest().chunks[1].file);
    let mut bytes = std::fs::read(&chunk).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x5a;
    std::fs::write(&chunk, &bytes).unwrap();
    match s.frames() {
        Err(RecordingError::Integrity { frame, .. }) => {
            assert!((FRAMES_PER_CHUNK..2 * FRAMES_PER_CHUNK).contains(&frame), "{frame}")
        }
        other => panic!("{other:?}"),
    }
    std::fs::remove_file(&chunk).unwrap();
    assert!(matches!(s.frames(), Err(RecordingError::Integrity { frame: 60, .. })));
}

fn dir_digest(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn finalized_sessions_refuse_changes() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut w = SessionWriter::create(root.path(), Some("sealed"), &EngineConfig::default()).unwrap();
    for k in 0..70 {
        w.append(&random_frame(&mut rng, k as f64, 9), None).unwrap();
    }
    assert!(matches!(
        w.append(&random_frame(&mut rng, 10.0, 9), None),
        Err(RecordingError::Ordering { .. })
    ));
    w.finalize().unwrap();
    let before = dir_digest(w.dir());
    assert!(matches!(w.append(&random_frame(&mut rng, 100.0, 9), None), Err(RecordingError::State(_))));
    assert!(matches!(w.finalize(), Err(RecordingError::State(_))));
    assert!(matches!(w.discard(), Err(RecordingError::State(_))));
    assert!(arcap_core::recording::discard_session(w.dir()).is_err());
    assert_eq!(dir_digest(w.dir()), before);
}

#[test]
fn discard_leaves_only_a_tombstone() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut w = SessionWriter::create(root.path(), Some("tmp"), &EngineConfig::default()).unwrap();
    for k in 0..100 {
        w.append(&random_frame(&mut rng, k as f64, 9), None).unwrap();
    }
    w.discard().unwrap();
    let files = dir_digest(w.dir());
    assert_eq!(files.len(), 1);
    let s = Session::open(w.dir()).unwrap();
    assert_eq!(s.manifest().status, RecordStatus::Discarded);
    assert!(s.require_finalized().is_err());
}

#[test]
fn session_ids_cannot_escape_the_root() {
    let root = tempfile::tempdir().unwrap();
    for id in ["", "../up", "a/b", "a\\b", ".", ".."] {
        assert!(
            matches!(
                SessionWriter::create(root.path(), Some(id), &EngineConfig::default()),
                Err(RecordingError::InvalidId(_))
            ),
            "{id:?}"
        );
    }
}

fn single_sphere_model(dir: &std::path::Path) -> RobotModel {
    let path = dir.join("ball.toml");
    std::fs::write(
        &path,
        r#"
schema = 1
name = "ball"
embodiment = "arm"
base_link = "base"

[[links]]
name = "base"
spheres = [{ center = [0.0, 0.0, 0.0], radius = 0.1 }]
"#,
    )
    .unwrap();
    RobotModel::from_file(&path).unwrap()
}

/// Lattice points a camera at the origin looking down +z would keep.
fn visible_lattice(center: Vector3<f64>, radius: f64, n: usize, cam: &CameraModel) -> usize {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .filter(|&i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let th = golden * i as f64;
            let normal = Vector3::new((1.0 - y * y).sqrt() * th.cos(), y, (1.0 - y * y).sqrt() * th.sin());
            let p = center + normal * radius;
            normal.dot(&-p) > 0.0 && common::projects_onto_sensor(cam, &Pose::identity(), &p)
        })
        .count()
}

#[test]
fn sphere_on_axis_shows_a_near_hemisphere() {
    let tmp = tempfile::tempdir().unwrap();
    let m = single_sphere_model(tmp.path());
    let cam = CameraModel::default();
    let base = Pose::from_translation(0.0, 0.0, 1.0);
    let cloud = render_robot_cloud(&m, &[], &base, &Pose::identity(), &cam, 100);
    assert_eq!(cloud.len(), visible_lattice(Vector3::new(0.0, 0.0, 1.0), 0.1, 100, &cam));
    assert!((40..=60).contains(&cloud.len()), "{}", cloud.len());

    let behind = render_robot_cloud(&m, &[], &Pose::from_translation(0.0, 0.0, -1.0), &Pose::identity(), &cam, 100);
    assert_eq!(behind.len(), 0);
}

#[test]
fn robot_points_lie_on_spheres() {
    let m = RobotModel::builtin("panda_gripper").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let cam = CameraModel::default();
    let camera = Pose::from_axis_angle(Vector3::new(0.5, 0.0, 1.2), Vector3::y(), std::f64::consts::PI);
    for _ in 0..20 {
        let (lo, hi) = (m.lower_limits(), m.upper_limits());
        let q: Vec<f64> = (0..m.dof()).map(|i| rng.random_range(lo[i]..=hi[i])).collect();
        let spheres = common::world_spheres(&m, &q, &Pose::identity());
        let cloud = render_robot_cloud(&m, &q, &Pose::identity(), &camera, &cam, 64);
        for p in cloud.iter_f64() {
            let on = spheres.iter().any(|(_, c, r)| ((p - c).norm() - r).abs() < 1e-6);
            assert!(on, "{p:?}");
        }
    }
}

#[test]
fn postprocess_crops_exactly_and_labels_sources() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let m = RobotModel::builtin("panda_leap").unwrap();
    let config = EngineConfig::default();
    let crop = config.workspace;
    let mut frames = Vec::new();
    for k in 0..20 {
        let mut f = random_frame(&mut rng, k as f64 * 0.1, m.dof());
        f.q = m.rest();
        // headset near the workspace looking at it
        f.headset = arcap_core::recording::quantize_pose(&Pose::from_axis_angle(
            Vector3::new(rng.random_range(0.0..0.3), rng.random_range(-0.2..0.2), 0.9),
            Vector3::x(),
            std::f64::consts::PI * 0.8,
        ));
        f.base = Pose::identity();
        frames.push(f);
    }
    let s = write_session(root.path(), "pp", &frames);
    let out = postprocess_session(&s, &crop, &m, 32).unwrap();
    assert_eq!(out.len(), frames.len());
    let mount = common::pose_matrix(&config.camera.mount);
    let mut kept_scene = 0;
    for (pf, f) in out.iter().zip(&frames) {
        assert_eq!(pf.timestamp, f.timestamp);
        let to_world = common::pose_matrix(&f.headset) * mount;
        let want: Vec<Vector3<f64>> = f
            .cloud
            .iter_f64()
            .map(|p| common::apply(&to_world, &p))
            .filter(|w| (0..3).all(|k| w[k] >= crop.min[k] && w[k] <= crop.max[k]))
            .collect();
        let got: Vec<&Vector3<f64>> =
            pf.points.iter().zip(&pf.sources).filter(|(_, s)| **s == PointSource::Scene).map(|(p, _)| p).collect();
        assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            assert!((*a - b).norm() < 1e-9, "{a:?} {b:?}");
        }
        kept_scene += got.len();
        assert!(pf.points.iter().all(|p| crop.contains(p)));
        let spheres = common::world_spheres(&m, pf.q.as_slice(), &pf.base);
        for (p, _) in pf.points.iter().zip(&pf.sources).filter(|(_, s)| **s == PointSource::Robot) {
            assert!(spheres.iter().any(|(_, c, r)| ((p - c).norm() - r).abs() < 1e-6));
        }
    }
    assert!(kept_scene > 0);
    assert!(out.iter().any(|pf| pf.sources.contains(&PointSource::Robot)));
}

#[test]
fn export_writes_the_logical_layout() {
    let root = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let m = RobotModel::builtin("panda_gripper").unwrap();
    let frames: Vec<DemoFrame> = (0..12)
        .map(|k| {
            let mut f = random_frame(&mut rng, k as f64, m.dof());
            f.q = m.rest();
            f
        })
        .collect();
    let s = write_session(root.path(), "ex", &frames);
    let crop = CropBox {
        min: [-5.0; 3],
        max: [5.0; 3],
    };
    let processed = postprocess_session(&s, &crop, &m, 16).unwrap();
    let out = root.path().join("export");
    export_frames(&processed, &out).unwrap();

    let cloud: Array2<f64> = read_npy(out.join("obs/point_cloud.npy")).unwrap();
    let offsets: Array1<u64> = read_npy(out.join("obs/point_cloud_offsets.npy")).unwrap();
    let joints: Array2<f64> = read_npy(out.join("obs/joint_angles.npy")).unwrap();
    let headset: Array2<f64> = read_npy(out.join("poses/headset.npy")).unwrap();
    let base: Array2<f64> = read_npy(out.join("poses/robot_base.npy")).unwrap();
    let gripper: Array1<i8> = read_npy(out.join("actions/gripper.npy")).unwrap();
    let times: Array1<f64> = read_npy(out.join("timestamps.npy")).unwrap();

    let total: usize = processed.iter().map(|p| p.points.len()).sum();
    assert_eq!(cloud.dim(), (total, 7));
    assert_eq!(offsets.len(), 13);
    assert_eq!(offsets[12] as usize, total);
    assert_eq!(joints.dim(), (12, m.dof()));
    assert_eq!(headset.dim(), (12, 7));
    assert_eq!(base.dim(), (12, 7));
    assert_eq!(gripper.len(), 12);
    assert_eq!(times.to_vec(), frames.iter().map(|f| f.timestamp).collect::<Vec<_>>());
    for (i, f) in frames.iter().enumerate() {
        let want = match f.gripper {
            None => -1,
            Some(GripperCommand::Closed) => 0,
            Some(GripperCommand::Open) => 1,
        };
        assert_eq!(gripper[i], want);
        assert_eq!(headset[(i, 0)], f.headset.position.x);
        let (a, b) = (offsets[i] as usize, offsets[i + 1] as usize);
        assert_eq!(b - a, processed[i].points.len());
    }
}
