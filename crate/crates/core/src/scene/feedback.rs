use serde::{Deserialize, Serialize};

use crate::kinematics::Pose;

pub const DEFAULT_SPEED_POSITION_THRESHOLD: f64 = 0.05;
/// 15 degrees.
pub const DEFAULT_SPEED_ORIENTATION_THRESHOLD: f64 = 15.0 * std::f64::consts::PI / 180.0;
/// Seconds per blink half-cycle (2 Hz square wave).
pub const BLINK_HALF_PERIOD: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeedbackEvent {
    Collision {
        timestamp: f64,
        links: Vec<String>,
    },
    SpeedLimit {
        timestamp: f64,
        /// Meters.
        position_error: f64,
        /// Radians.
        orientation_error: f64,
    },
    VisibilityLoss {
        timestamp: f64,
        visible_fraction: f64,
    },
}

impl FeedbackEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            FeedbackEvent::Collision { timestamp, .. }
            | FeedbackEvent::SpeedLimit { timestamp, .. }
            | FeedbackEvent::VisibilityLoss { timestamp, .. } => *timestamp,
        }
    }

    /// Bit of this kind in a per-tick event mask.
    pub fn mask_bit(&self) -> u8 {
        match self {
            FeedbackEvent::Collision { .. } => EVENT_COLLISION,
            FeedbackEvent::SpeedLimit { .. } => EVENT_SPEED,
            FeedbackEvent::VisibilityLoss { .. } => EVENT_VISIBILITY,
        }
    }
}

pub const EVENT_COLLISION: u8 = 1;
pub const EVENT_SPEED: u8 = 2;
pub const EVENT_VISIBILITY: u8 = 4;

pub fn event_mask(events: &[FeedbackEvent]) -> u8 {
    events.iter().fold(0, |m, e| m | e.mask_bit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameColor {
    Red,
    Yellow,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackDisplay {
    pub color: FrameColor,
    pub blinking: bool,
    pub haptic: bool,
}

impl Default for FeedbackDisplay {
    fn default() -> Self {
        FeedbackDisplay {
            color: FrameColor::Red,
            blinking: false,
            haptic: false,
        }
    }
}

impl FeedbackDisplay {
    /// Blue with haptics on collision, else Yellow when the robot lags or
    /// trails the hand, else a steady Red frame. Warnings blink.
    pub fn from_events(events: &[FeedbackEvent], lagging: bool) -> Self {
        let collision = events.iter().any(|e| matches!(e, FeedbackEvent::Collision { .. }));
        let speed = events.iter().any(|e| matches!(e, FeedbackEvent::SpeedLimit { .. }));
        if collision {
            FeedbackDisplay {
                color: FrameColor::Blue,
                blinking: true,
                haptic: true,
            }
        } else if lagging || speed {
            FeedbackDisplay {
                color: FrameColor::Yellow,
                blinking: true,
                haptic: false,
            }
        } else {
            FeedbackDisplay::default()
        }
    }
}

/// Index of the current blink half-cycle; even phases show the frame.
pub fn blink_phase(timestamp: f64) -> u64 {
    (timestamp / BLINK_HALF_PERIOD).floor().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedMismatch {
    pub position_error: f64,
    pub orientation_error: f64,
}

/// Reports the tracking error when the end effector trails the target by
/// more than either threshold.
pub fn detect_speed_mismatch(
    target: &Pose,
    actual: &Pose,
    position_threshold: f64,
    orientation_threshold: f64,
) -> Option<SpeedMismatch> {
    let position_error = target.position_distance(actual);
    let orientation_error = actual.rotation_error_to(target).norm();
    (position_error > position_threshold || orientation_error > orientation_threshold).then_some(SpeedMismatch {
        position_error,
        orientation_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn speed_examples() {
        let a = Pose::identity();
        let t = DEFAULT_SPEED_ORIENTATION_THRESHOLD;
        assert!(detect_speed_mismatch(&a, &a, 0.05, t).is_none());
        let b = Pose::from_translation(0.1, 0.0, 0.0);
        let m = detect_speed_mismatch(&b, &a, 0.05, t).unwrap();
        assert!((m.position_error - 0.1).abs() < 1e-12);
        let c = Pose::from_axis_angle(Vector3::zeros(), Vector3::x(), 20f64.to_radians());
        assert!(detect_speed_mismatch(&c, &a, 0.05, t).is_some());
        let d = Pose::from_axis_angle(Vector3::zeros(), Vector3::x(), 10f64.to_radians());
        assert!(detect_speed_mismatch(&d, &a, 0.05, t).is_none());
    }

    #[test]
    fn display_priority() {
        let col = FeedbackEvent::Collision {
            timestamp: 0.0,
            links: vec!["link1".into()],
        };
        let spd = FeedbackEvent::SpeedLimit {
            timestamp: 0.0,
            position_error: 0.1,
            orientation_error: 0.0,
        };
        let d = FeedbackDisplay::from_events(&[spd.clone(), col], false);
        assert_eq!(d.color, FrameColor::Blue);
        assert!(d.haptic);
        let d = FeedbackDisplay::from_events(&[spd], false);
        assert_eq!((d.color, d.haptic), (FrameColor::Yellow, false));
        assert_eq!(FeedbackDisplay::from_events(&[], true).color, FrameColor::Yellow);
        assert_eq!(FeedbackDisplay::from_events(&[], false), FeedbackDisplay::default());
    }

    #[test]
    fn event_json_is_tagged() {
        let e = FeedbackEvent::VisibilityLoss {
            timestamp: 1.5,
            visible_fraction: 0.5,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"kind":"visibility_loss","timestamp":1.5,"visible_fraction":0.5}"#);
        assert_eq!(serde_json::from_str::<FeedbackEvent>(&s).unwrap(), e);
    }

    #[test]
    fn blink_phase_is_two_hz() {
        assert_eq!(blink_phase(0.0), 0);
        assert_eq!(blink_phase(0.26), 1);
        assert_eq!(blink_phase(1.0), 4);
    }
}
