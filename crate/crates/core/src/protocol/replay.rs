use std::path::Path;

use thiserror::Error;

use super::{decode_message, encode_message, DecodeError, Envelope, Message};
use crate::recording::Session;
use crate::retargeting::HandFrame;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("corrupt hand stream at byte {offset}: {reason}")]
    Integrity { offset: usize, reason: String },
    #[error("speed multiplier must be positive and finite, got {0}")]
    BadSpeed(f64),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error(transparent)]
    Session(#[from] crate::recording::RecordingError),
}

/// Encodes frames as consecutive `hand_frame` messages.
pub fn encode_hand_stream(frames: &[HandFrame]) -> Vec<u8> {
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        out.extend(encode_message(&Envelope {
            seq: i as u64,
            message: Message::HandFrame { frame: *f, cloud: None },
        }));
    }
    out
}

pub fn decode_hand_stream(bytes: &[u8]) -> Result<Vec<HandFrame>, ReplayError> {
    let mut frames = Vec::new();
    let mut pos = 0;
    let mut last: Option<f64> = None;
    while pos < bytes.len() {
        let bad = |offset: usize, reason: String| ReplayError::Integrity { offset, reason };
        let (env, used) = decode_message(&bytes[pos..]).map_err(|e| match e {
            DecodeError::Incomplete { .. } => bad(bytes.len(), "truncated frame".into()),
            e => bad(pos, e.to_string()),
        })?;
        let Message::HandFrame { frame, .. } = env.message else {
            return Err(bad(pos, format!("unexpected {} message", env.message.type_name())));
        };
        if let Err(e) = frame.validate() {
            return Err(bad(pos, e.to_string()));
        }
        if last.is_some_and(|t| !(frame.timestamp > t)) {
            return Err(bad(pos, "timestamps out of order".into()));
        }
        last = Some(frame.timestamp);
        frames.push(frame);
        pos += used;
    }
    Ok(frames)
}

/// Loads a raw hand-stream file, or the hand stream of a session directory,
/// dividing every timestamp by `speed`.
pub fn replay_source(path: &Path, speed: f64) -> Result<Vec<HandFrame>, ReplayError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(ReplayError::BadSpeed(speed));
    }
    let file = if path.is_dir() {
        Session::open(path)?.hands_path().ok_or_else(|| ReplayError::Integrity {
            offset: 0,
            reason: "session has no hand stream".into(),
        })?
    } else {
        path.to_path_buf()
    };
    let bytes = std::fs::read(&file).map_err(|e| ReplayError::Io(file.display().to_string(), e))?;
    let mut frames = decode_hand_stream(&bytes)?;
    if speed != 1.0 {
        for f in &mut frames {
            f.timestamp /= speed;
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::Pose;
    use crate::retargeting::Fingertips;
    use nalgebra::Vector3;

    fn frames(n: usize) -> Vec<HandFrame> {
        (0..n)
            .map(|i| HandFrame {
                timestamp: i as f64 / 60.0,
                wrist: Pose::from_translation(0.5, 0.0, 0.3),
                headset: Pose::identity(),
                fingertips: Fingertips {
                    thumb: Vector3::new(0.03, 0.0, 0.05),
                    index: Vector3::new(0.0, 0.03, 0.1),
                    middle: Vector3::new(0.0, 0.0, 0.1),
                    ring: Vector3::new(0.0, -0.03, 0.1),
                    pinky: Vector3::new(0.0, -0.05, 0.09),
                },
            })
            .collect()
    }

    #[test]
    fn replay_examples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.hands");
        let fs = frames(100);
        std::fs::write(&path, encode_hand_stream(&fs)).unwrap();
        let back = replay_source(&path, 1.0).unwrap();
        assert_eq!(back, fs);
        let fast = replay_source(&path, 2.0).unwrap();
        assert_eq!(fast[10].timestamp - fast[9].timestamp, (fs[10].timestamp - fs[9].timestamp) / 2.0);

        let bytes = encode_hand_stream(&fs);
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        match replay_source(&path, 1.0) {
            Err(ReplayError::Integrity { offset, .. }) => assert_eq!(offset, bytes.len() - 10),
            other => panic!("{other:?}"),
        }
    }
}
