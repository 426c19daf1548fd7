//! Human hand samples to robot targets.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose;

/// Tips farther than this from the wrist origin are treated as tracker glitches.
pub const MAX_TIP_DISTANCE: f64 = 0.30;
pub const DEFAULT_OPEN_WIDTH: f64 = 0.08;
pub const DEFAULT_TOGGLE_PERIOD: f64 = 1.0;

/// Human finger whose tip drives each robot fingertip frame. The pinky has
/// no counterpart on a four-finger hand.
pub const FINGER_MAP: [(&str, Finger); 4] = [
    ("thumb_tip", Finger::Thumb),
    ("index_tip", Finger::Index),
    ("middle_tip", Finger::Middle),
    ("ring_tip", Finger::Ring),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

/// Fingertip positions in the wrist frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fingertips {
    pub thumb: Vector3<f64>,
    pub index: Vector3<f64>,
    pub middle: Vector3<f64>,
    pub ring: Vector3<f64>,
    pub pinky: Vector3<f64>,
}

impl Fingertips {
    pub fn get(&self, f: Finger) -> Vector3<f64> {
        match f {
            Finger::Thumb => self.thumb,
            Finger::Index => self.index,
            Finger::Middle => self.middle,
            Finger::Ring => self.ring,
            Finger::Pinky => self.pinky,
        }
    }

    fn named(&self) -> [(&'static str, Vector3<f64>); 5] {
        [
            ("thumb", self.thumb),
            ("index", self.index),
            ("middle", self.middle),
            ("ring", self.ring),
            ("pinky", self.pinky),
        ]
    }
}

/// One tracker sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandFrame {
    /// Seconds.
    pub timestamp: f64,
    /// World frame.
    pub wrist: Pose,
    /// World frame.
    pub headset: Pose,
    pub fingertips: Fingertips,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HandFrameError {
    #[error("hand frame contains a non-finite value")]
    NonFinite,
    #[error("{finger} tip is {distance:.3} m from the wrist (limit {MAX_TIP_DISTANCE} m)")]
    Implausible { finger: &'static str, distance: f64 },
}

impl HandFrame {
    pub fn validate(&self) -> Result<(), HandFrameError> {
        let tips_finite = self
            .fingertips
            .named()
            .iter()
            .all(|(_, v)| v.iter().all(|c| c.is_finite()));
        if !(self.timestamp.is_finite() && self.wrist.is_finite() && self.headset.is_finite() && tips_finite) {
            return Err(HandFrameError::NonFinite);
        }
        for (finger, v) in self.fingertips.named() {
            let distance = v.norm();
            if distance >= MAX_TIP_DISTANCE {
                return Err(HandFrameError::Implausible { finger, distance });
            }
        }
        Ok(())
    }

    /// World-frame position of a fingertip.
    pub fn tip_world(&self, f: Finger) -> Vector3<f64> {
        self.wrist.transform_point(&self.fingertips.get(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub state: GripperCommand,
    /// `None` until the first toggle, so the first change is never delayed.
    pub last_toggle_time: Option<f64>,
}

impl Default for GripperState {
    fn default() -> Self {
        GripperState {
            state: GripperCommand::Open,
            last_toggle_time: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbodimentTarget {
    /// World frame.
    pub wrist: Pose,
    /// Robot fingertip frame name to position in the robot base frame.
    pub fingertips: Option<BTreeMap<String, Vector3<f64>>>,
    pub gripper: Option<GripperCommand>,
}

/// Maps thumb, index, middle and ring tips onto the robot hand; the wrist
/// target is the tracked wrist itself.
pub fn retarget_dex_hand(frame: &HandFrame, base: &Pose) -> EmbodimentTarget {
    let tips = FINGER_MAP
        .iter()
        .map(|(name, f)| {
            let world = frame.tip_world(*f);
            (name.to_string(), base.inverse_transform_point(&world))
        })
        .collect();
    EmbodimentTarget {
        wrist: frame.wrist,
        fingertips: Some(tips),
        gripper: None,
    }
}

/// Centers the gripper between index and thumb and opens it when they are
/// farther apart than `open_width`. A change of state is held back until
/// `toggle_period` seconds have passed since the previous one.
pub fn retarget_parallel_gripper(
    frame: &HandFrame,
    state: &GripperState,
    open_width: f64,
    toggle_period: f64,
) -> (EmbodimentTarget, GripperState) {
    let thumb = frame.tip_world(Finger::Thumb);
    let index = frame.tip_world(Finger::Index);
    let midpoint = (thumb + index) / 2.0;
    let desired = if (index - thumb).norm() > open_width {
        GripperCommand::Open
    } else {
        GripperCommand::Closed
    };
    let dwell_ok = state
        .last_toggle_time
        .is_none_or(|t| frame.timestamp - t >= toggle_period);
    let next = if desired != state.state && dwell_ok {
        GripperState {
            state: desired,
            last_toggle_time: Some(frame.timestamp),
        }
    } else {
        *state
    };
    let target = EmbodimentTarget {
        wrist: Pose::new(midpoint, frame.wrist.orientation),
        fingertips: None,
        gripper: Some(next.state),
    };
    (target, next)
}
