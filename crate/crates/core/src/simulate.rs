//! Synthetic tracker streams for desk-scale runs without a human.

use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kinematics::Pose;
use crate::retargeting::{Fingertips, HandFrame};
use crate::scene::ColoredPointCloud;

pub const SIM_RATE: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    Reach,
    PickPlace,
    SweepThroughObstacle,
    FastJerk,
    OutOfView,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Reach,
        Scenario::PickPlace,
        Scenario::SweepThroughObstacle,
        Scenario::FastJerk,
        Scenario::OutOfView,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Reach => "reach",
            Scenario::PickPlace => "pick_place",
            Scenario::SweepThroughObstacle => "sweep_through_obstacle",
            Scenario::FastJerk => "fast_jerk",
            Scenario::OutOfView => "out_of_view",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScenario(pub String);

impl fmt::Display for UnknownScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = Scenario::ALL.iter().map(|s| s.name()).collect();
        write!(f, "unknown scenario '{}' (expected one of: {})", self.0, names.join(", "))
    }
}

impl std::error::Error for UnknownScenario {}

impl FromStr for Scenario {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| UnknownScenario(s.to_string()))
    }
}

/// Wrist pose the streams start from: the dexterous hand's wrist with the
/// default arm at rest, palm facing down.
pub fn home_wrist() -> Pose {
    Pose::new(
        Vector3::new(0.307, 0.0, 0.59),
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_4)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI),
    )
}

/// Demonstrator's head behind the robot, looking down at the workspace.
pub fn home_headset() -> Pose {
    Pose::look_at(Vector3::new(-0.3, 0.0, 0.9), Vector3::new(0.5, 0.0, 0.2), Vector3::z())
}

/// Relaxed hand in the wrist frame; `pinch` in [0, 1] closes index onto
/// thumb (0 = 0.135 m apart, 1 = 0.03 m).
pub fn hand_pose(pinch: f64) -> Fingertips {
    let thumb = Vector3::new(0.111, -0.077, 0.086);
    let index0 = Vector3::new(0.030, -0.062, 0.193);
    let mid = (thumb + index0) / 2.0;
    let open = (index0 - thumb).norm();
    let sep = open + (0.03 - open) * pinch.clamp(0.0, 1.0);
    let dir = (index0 - thumb).normalize();
    Fingertips {
        thumb: mid - dir * (sep / 2.0),
        index: mid + dir * (sep / 2.0),
        middle: Vector3::new(0.0, -0.062, 0.198),
        ring: Vector3::new(-0.030, -0.062, 0.193),
        pinky: Vector3::new(-0.055, -0.060, 0.175),
    }
}

/// Quintic blend 0 → 1 with zero velocity and acceleration at both ends.
pub fn quintic(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

/// Piecewise quintic through `(time, value)` knots, held after the last.
fn track(knots: &[(f64, Vector3<f64>)], t: f64) -> Vector3<f64> {
    let mut prev = knots[0];
    for &k in &knots[1..] {
        if t <= k.0 {
            let s = quintic((t - prev.0) / (k.0 - prev.0));
            return prev.1 + (k.1 - prev.1) * s;
        }
        prev = k;
    }
    prev.1
}

fn scalar_track(knots: &[(f64, f64)], t: f64) -> f64 {
    let v: Vec<(f64, Vector3<f64>)> = knots.iter().map(|&(t, x)| (t, Vector3::new(x, 0.0, 0.0))).collect();
    track(&v, t).x
}

/// Generates the stream for `scenario`. Identical `(scenario, seed)` give
/// identical frames.
pub fn simulate(scenario: Scenario, seed: u64) -> Vec<HandFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (scenario as u64) << 56);
    let home = home_wrist();
    let p0 = home.position;
    let jitter = |amp: f64, rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.random_range(-amp..=amp),
            rng.random_range(-amp..=amp),
            rng.random_range(-amp..=amp),
        )
    };
    let headset = home_headset();

    // Per scenario: duration, wrist path, pinch profile, headset yaw profile.
    let (duration, wrist_knots, pinch_knots, yaw_knots): (f64, Vec<(f64, Vector3<f64>)>, Vec<(f64, f64)>, Vec<(f64, f64)>) =
        match scenario {
            Scenario::Reach => {
                let goal = p0 + jitter(0.12, &mut rng);
                (4.0, vec![(0.0, p0), (0.5, p0), (3.0, goal), (4.0, goal)], vec![(0.0, 0.0)], vec![(0.0, 0.0)])
            }
            Scenario::PickPlace => {
                let pick = p0 + Vector3::new(0.10, -0.12, -0.12) + jitter(0.02, &mut rng);
                let place = p0 + Vector3::new(0.05, 0.15, -0.10) + jitter(0.02, &mut rng);
                let above = |p: Vector3<f64>| p + Vector3::new(0.0, 0.0, 0.08);
                (
                    10.0,
                    vec![
                        (0.0, p0),
                        (1.5, above(pick)),
                        (2.5, pick),
                        (4.0, pick),
                        (5.0, above(pick)),
                        (6.5, above(place)),
                        (7.5, place),
                        (9.0, place),
                        (10.0, above(place)),
                    ],
                    vec![(0.0, 0.0), (2.6, 0.0), (3.4, 1.0), (7.6, 1.0), (8.4, 0.0)],
                    vec![(0.0, 0.0)],
                )
            }
            Scenario::SweepThroughObstacle => {
                let side = Vector3::new(0.0, 0.25, 0.0);
                (
                    5.0,
                    vec![(0.0, p0 - side), (0.5, p0 - side), (4.5, p0 + side), (5.0, p0 + side)],
                    vec![(0.0, 0.0)],
                    vec![(0.0, 0.0)],
                )
            }
            Scenario::FastJerk => (4.0, vec![(0.0, p0), (4.0, p0)], vec![(0.0, 0.0)], vec![(0.0, 0.0)]),
            Scenario::OutOfView => (
                4.0,
                vec![(0.0, p0), (4.0, p0)],
                vec![(0.0, 0.0)],
                vec![(0.0, 0.0), (1.0, 0.0), (3.0, 100f64.to_radians()), (4.0, 100f64.to_radians())],
            ),
        };

    // 0.5 m step held for the middle of the stream.
    let step = if scenario == Scenario::FastJerk {
        let angle = rng.random_range(-std::f64::consts::FRAC_PI_4..std::f64::consts::FRAC_PI_4);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        Some(Vector3::new(angle.sin(), sign * angle.cos(), 0.0) * 0.5)
    } else {
        None
    };

    let n = (duration * SIM_RATE).round() as usize;
    (0..n)
        .map(|k| {
            let t = k as f64 / SIM_RATE;
            let mut pos = track(&wrist_knots, t) + jitter(0.0005, &mut rng);
            if let Some(s) = step {
                if (1.0..3.0).contains(&t) {
                    pos += s;
                }
            }
            let yaw = scalar_track(&yaw_knots, t);
            let head = Pose::new(
                headset.position,
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * headset.orientation,
            );
            HandFrame {
                timestamp: t,
                wrist: Pose::new(pos, home.orientation),
                headset: head,
                fingertips: hand_pose(scalar_track(&pinch_knots, t)),
            }
        })
        .collect()
}

/// Obstacle the sweep scenario drives through: a 3 x 4 x 3 block of points
/// on the wrist path, one per voxel center of the default collision grid,
/// so the occupied set reproduces the points exactly.
pub fn scenario_scene(scenario: Scenario) -> Option<ColoredPointCloud> {
    (scenario == Scenario::SweepThroughObstacle).then(|| {
        let res = crate::scene::DEFAULT_RESOLUTION;
        let mut cloud = ColoredPointCloud::new();
        for i in 14..=16 {
            for j in -2..=1 {
                for k in 28..=30 {
                    let c = [i, j, k].map(|v| ((v as f64 + 0.5) * res) as f32);
                    cloud.push(c, [200, 60, 60]);
                }
            }
        }
        cloud
    })
}

/// Table top plus scattered boxes, clear of the robot's default motions;
/// `n` points in total.
pub fn clutter_scene(n: usize, seed: u64) -> ColoredPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = ColoredPointCloud::with_capacity(n);
    let table = n * 4 / 5;
    for _ in 0..table {
        let p = [rng.random_range(0.35f32..0.95), rng.random_range(-0.6f32..0.6), rng.random_range(-0.02f32..0.0)];
        cloud.push(p, [150, 120, 90]);
    }
    let boxes = [([0.6f32, -0.35, 0.0], 0.08f32), ([0.75, 0.3, 0.0], 0.1), ([0.85, 0.0, 0.0], 0.06)];
    for i in table..n {
        let (o, s) = boxes[i % boxes.len()];
        let p = [
            o[0] + rng.random_range(0.0..s),
            o[1] + rng.random_range(0.0..s),
            o[2] + rng.random_range(0.0..s),
        ];
        cloud.push(p, [40, 90, 200]);
    }
    cloud
}
