mod common;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use arcap_core::kinematics::{JointConfig, Pose, RobotModel};
use arcap_core::retargeting::{retarget_parallel_gripper, Fingertips, GripperCommand, GripperState, HandFrame};
use arcap_core::scene::{check_collision, check_visibility, voxelize, CameraModel, ColoredPointCloud, VoxelGrid};

fn random_pose(rng: &mut ChaCha8Rng, spread: f64) -> Pose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    Pose::new(
        Vector3::new(
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
        ),
        UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle),
    )
}

fn random_config(m: &RobotModel, rng: &mut ChaCha8Rng) -> JointConfig {
    let (lo, hi) = (m.lower_limits(), m.upper_limits());
    JointConfig::new((0..m.dof()).map(|i| rng.random_range(lo[i]..=hi[i])).collect())
}

/// Points scattered around the robot's spheres so that scenes hit, graze
/// and miss.
fn scene_near_robot(m: &RobotModel, q: &[f64], base: &Pose, rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
    let spheres = common::world_spheres(m, q, base);
    (0..n)
        .map(|_| {
            let (_, c, r) = spheres[rng.random_range(0..spheres.len())];
            let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                .normalize();
            c + dir * rng.random_range(0.0..r + 0.08)
        })
        .collect()
}

fn cloud_of(points: &[Vector3<f64>]) -> ColoredPointCloud {
    let mut c = ColoredPointCloud::new();
    for p in points {
        c.push([p.x as f32, p.y as f32, p.z as f32], [0, 0, 0]);
    }
    c
}

#[test]
fn collision_has_no_false_negatives_and_bounded_false_positives() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for name in ["panda_gripper", "panda_leap"] {
        let m = RobotModel::builtin(name).unwrap();
        for _ in 0..60 {
            let q = random_config(&m, &mut rng);
            let base = random_pose(&mut rng, 0.3);
            let res = rng.random_range(0.01..0.05);
            let margin = rng.random_range(0.0..0.02);
            let origin = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            let raw = scene_near_robot(&m, q.as_slice(), &base, &mut rng, 30);
            let cloud = cloud_of(&raw);
            // the grid sees the f32 points, so the oracle does too
            let points: Vec<Vector3<f64>> = cloud.iter_f64().collect();
            let grid = voxelize(&cloud, origin, res);
            let hits: std::collections::BTreeSet<String> =
                check_collision(&m, q.as_slice(), &base, &grid, margin).unwrap().into_iter().collect();
            let must = common::brute_force_links(&m, q.as_slice(), &base, &points, margin);
            let may = common::brute_force_links(&m, q.as_slice(), &base, &points, margin + res * 3f64.sqrt() + 1e-9);
            assert!(must.is_subset(&hits), "{name}: missed {:?}", must.difference(&hits).collect::<Vec<_>>());
            assert!(hits.is_subset(&may), "{name}: spurious {:?}", hits.difference(&may).collect::<Vec<_>>());
        }
    }
}

#[test]
fn voxel_centered_scenes_match_inflated_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = RobotModel::builtin("panda_gripper").unwrap();
    let res = 0.02;
    let origin = Vector3::zeros();
    let empty = VoxelGrid::empty(origin, res);
    for _ in 0..100 {
        let q = random_config(&m, &mut rng);
        let base = Pose::identity();
        let raw = scene_near_robot(&m, q.as_slice(), &base, &mut rng, 20);
        let centers: Vec<Vector3<f64>> = raw.iter().map(|p| empty.center(&empty.index_of(p))).collect();
        let grid = VoxelGrid::from_indices(origin, res, centers.iter().map(|c| empty.index_of(c)).collect());
        let hits: std::collections::BTreeSet<String> =
            check_collision(&m, q.as_slice(), &base, &grid, 0.01).unwrap().into_iter().collect();
        let oracle = common::brute_force_links(&m, q.as_slice(), &base, &centers, 0.01 + res * 3f64.sqrt() / 2.0);
        assert_eq!(hits, oracle);
    }
}

#[test]
fn frustum_agrees_with_pinhole_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cam = CameraModel::default();
    let mut seen = 0;
    for _ in 0..50 {
        let pose = random_pose(&mut rng, 1.0);
        for _ in 0..200 {
            // sample around the view axis so both outcomes are common
            let local = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-0.5..3.5));
            let world = pose.transform_point(&local);
            let got = check_visibility(&pose, &cam, &[world], 1.0).unwrap().fraction == 1.0;
            let want = common::projects_onto_sensor(&cam, &pose, &world);
            assert_eq!(got, want, "{local:?}");
            seen += got as usize;
        }
    }
    assert!(seen > 500 && seen < 9500, "{seen}");
}

#[test]
fn visibility_fraction_counts_projected_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cam = CameraModel::default();
    for _ in 0..100 {
        let pose = random_pose(&mut rng, 0.5);
        let pts: Vec<Vector3<f64>> = (0..40)
            .map(|_| pose.transform_point(&Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..3.5))))
            .collect();
        let want = pts.iter().filter(|p| common::projects_onto_sensor(&cam, &pose, p)).count() as f64 / 40.0;
        let v = check_visibility(&pose, &cam, &pts, 0.95).unwrap();
        assert_eq!(v.fraction, want);
        assert_eq!(v.lost, want < 0.95);
    }
}

#[test]
fn world_camera_world_roundtrip() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let headset = random_pose(&mut rng, 2.0);
        let cam_pose = CameraModel::default().world_pose(&headset);
        let p = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let back = cam_pose.transform_point(&cam_pose.inverse_transform_point(&p));
        assert!((back - p).norm() < 1e-9);
        // same camera pose as composing plain matrices
        let m = common::pose_matrix(&headset) * common::pose_matrix(&CameraModel::default().mount);
        let via = common::apply(&m, &Vector3::new(0.1, 0.2, 0.3));
        assert!((via - cam_pose.transform_point(&Vector3::new(0.1, 0.2, 0.3))).norm() < 1e-9);
    }
}

fn pinch_frame(t: f64, width: f64) -> HandFrame {
    HandFrame {
        timestamp: t,
        wrist: Pose::identity(),
        headset: Pose::identity(),
        fingertips: Fingertips {
            thumb: Vector3::zeros(),
            index: Vector3::new(width, 0.0, 0.0),
            middle: Vector3::new(0.0, 0.05, 0.0),
            ring: Vector3::new(0.0, 0.07, 0.0),
            pinky: Vector3::new(0.0, 0.09, 0.0),
        },
    }
}

#[test]
fn gripper_toggles_respect_dwell() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut state = GripperState::default();
    let mut width: f64 = 0.08;
    let mut toggles = Vec::new();
    let mut last = state.state;
    for k in 0..100_000u64 {
        let t = k as f64 / 60.0;
        width = (width + rng.random_range(-0.02..0.02)).clamp(0.0, 0.2);
        let (target, next) = retarget_parallel_gripper(&pinch_frame(t, width), &state, 0.08, 1.0);
        assert_eq!(target.gripper, Some(next.state));
        if next.state != last {
            toggles.push(t);
            last = next.state;
        }
        state = next;
    }
    assert!(toggles.len() > 500, "{}", toggles.len());
    assert!(toggles.windows(2).all(|w| w[1] - w[0] >= 1.0));
}

#[test]
fn gripper_follows_width_once_dwell_passed() {
    let s = GripperState::default();
    let (_, s) = retarget_parallel_gripper(&pinch_frame(0.0, 0.02), &s, 0.08, 1.0);
    assert_eq!(s.state, GripperCommand::Closed);
    let (_, s2) = retarget_parallel_gripper(&pinch_frame(0.5, 0.12), &s, 0.08, 1.0);
    assert_eq!(s2.state, GripperCommand::Closed);
    let (_, s3) = retarget_parallel_gripper(&pinch_frame(1.0, 0.12), &s, 0.08, 1.0);
    assert_eq!(s3.state, GripperCommand::Open);
    // exactly the open width is not wider than it
    let (_, s4) = retarget_parallel_gripper(&pinch_frame(2.5, 0.08), &s3, 0.08, 1.0);
    assert_eq!(s4.state, GripperCommand::Closed);
}
