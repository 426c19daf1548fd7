use base64::Engine as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::engine::EngineOutput;
use crate::kinematics::Pose;
use crate::retargeting::HandFrame;
use crate::scene::ColoredPointCloud;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8765;
/// Largest accepted payload, bytes.
pub const MAX_FRAME_LEN: usize = 64 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Tracker,
    Console,
    Replay,
    Simulator,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    Finalize,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    VersionMismatch,
    HandshakeRequired,
    Protocol,
    Ordering,
    InvalidFrame,
    State,
    Integrity,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Recording,
    Finalized,
    Discarded,
}

/// Point cloud carried as base64 of its binary file form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CloudPayload(pub ColoredPointCloud);

impl Serialize for CloudPayload {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(self.0.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for CloudPayload {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(s.as_bytes())
            .map_err(serde::de::Error::custom)?;
        ColoredPointCloud::from_bytes(&bytes)
            .map(CloudPayload)
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Message {
    Hello {
        protocol_version: u32,
        client_kind: ClientKind,
    },
    SceneUpload {
        cloud: CloudPayload,
    },
    PlaceRobot {
        pose: Pose,
    },
    HandFrame {
        frame: HandFrame,
        /// Camera-frame depth cloud captured with this sample, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cloud: Option<CloudPayload>,
    },
    EngineOutput {
        output: EngineOutput,
        /// Hand frames superseded by newer ones since the previous output.
        dropped: u64,
    },
    RecordStart {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
    },
    RecordStop {
        mode: StopMode,
    },
    RecordAck {
        session_id: String,
        status: RecordStatus,
        frame_count: u64,
    },
    Calibrate {
        t_wb: Pose,
        t_wc: Pose,
    },
    CalibrationResult {
        pose: Pose,
    },
    Error {
        code: ErrorCode,
        text: String,
    },
}

impl Message {
    pub fn type_name(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::SceneUpload { .. } => "scene_upload",
            Message::PlaceRobot { .. } => "place_robot",
            Message::HandFrame { .. } => "hand_frame",
            Message::EngineOutput { .. } => "engine_output",
            Message::RecordStart { .. } => "record_start",
            Message::RecordStop { .. } => "record_stop",
            Message::RecordAck { .. } => "record_ack",
            Message::Calibrate { .. } => "calibrate",
            Message::CalibrationResult { .. } => "calibration_result",
            Message::Error { .. } => "error",
        }
    }

    pub fn error(code: ErrorCode, text: impl Into<String>) -> Message {
        Message::Error {
            code,
            text: text.into(),
        }
    }
}

/// A message with its per-connection sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    /// More bytes are needed; `needed` is the full frame length when known.
    #[error("incomplete frame: have {have} bytes, need {needed}")]
    Incomplete { have: usize, needed: usize },
    #[error("frame of {0} bytes exceeds the limit")]
    TooLarge(usize),
    #[error("protocol error: {0}")]
    Protocol(String),
}

/// Payload JSON with keys sorted at every level.
pub fn encode_payload(env: &Envelope) -> Vec<u8> {
    let mut value = serde_json::to_value(&env.message).expect("messages serialize");
    value
        .as_object_mut()
        .expect("messages are objects")
        .insert("seq".into(), env.seq.into());
    serde_json::to_vec(&value).expect("values serialize")
}

/// `u32` little-endian payload length followed by the payload.
pub fn encode_message(env: &Envelope) -> Vec<u8> {
    let payload = encode_payload(env);
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

pub fn decode_payload(payload: &[u8]) -> Result<Envelope, DecodeError> {
    let mut value: serde_json::Value =
        serde_json::from_slice(payload).map_err(|e| DecodeError::Protocol(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| DecodeError::Protocol("payload is not an object".into()))?;
    let seq = obj
        .remove("seq")
        .and_then(|s| s.as_u64())
        .ok_or_else(|| DecodeError::Protocol("missing or invalid seq".into()))?;
    let message = Message::deserialize(value).map_err(|e| DecodeError::Protocol(e.to_string()))?;
    Ok(Envelope { seq, message })
}

/// Decodes one frame from the front of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(Envelope, usize), DecodeError> {
    let len = frame_len(bytes)?;
    let end = 4 + len;
    if bytes.len() < end {
        return Err(DecodeError::Incomplete {
            have: bytes.len(),
            needed: end,
        });
    }
    Ok((decode_payload(&bytes[4..end])?, end))
}

/// Payload length announced by a frame header.
pub fn frame_len(bytes: &[u8]) -> Result<usize, DecodeError> {
    if bytes.len() < 4 {
        return Err(DecodeError::Incomplete {
            have: bytes.len(),
            needed: 4,
        });
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if len > MAX_FRAME_LEN {
        return Err(DecodeError::TooLarge(len));
    }
    Ok(len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_start_payload() {
        let bytes = encode_message(&Envelope {
            seq: 7,
            message: Message::RecordStart { session_id: None },
        });
        let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
        assert_eq!(len, bytes.len() - 4);
        let text = std::str::from_utf8(&bytes[4..]).unwrap();
        assert_eq!(text, r#"{"seq":7,"type":"record_start"}"#);
        assert_eq!(decode_message(&bytes).unwrap().1, bytes.len());
    }

    #[test]
    fn truncated_is_incomplete() {
        let bytes = encode_message(&Envelope {
            seq: 0,
            message: Message::RecordStop { mode: StopMode::Discard },
        });
        for cut in 0..bytes.len() {
            assert!(matches!(decode_message(&bytes[..cut]), Err(DecodeError::Incomplete { .. })));
        }
    }

    #[test]
    fn garbage_is_protocol_error() {
        let mut bytes = 5u32.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"\xff{]x!");
        assert!(matches!(decode_message(&bytes), Err(DecodeError::Protocol(_))));
        let unknown = br#"{"seq":1,"type":"teleport"}"#;
        assert!(matches!(decode_payload(unknown), Err(DecodeError::Protocol(_))));
        let extra = br#"{"seq":1,"type":"record_stop","mode":"discard","x":1}"#;
        assert!(matches!(decode_payload(extra), Err(DecodeError::Protocol(_))));
    }

    #[test]
    fn cloud_survives_roundtrip() {
        let mut c = ColoredPointCloud::new();
        c.push([0.25, -1.0, 3.5], [9, 8, 7]);
        let env = Envelope {
            seq: 3,
            message: Message::SceneUpload { cloud: CloudPayload(c) },
        };
        let (back, _) = decode_message(&encode_message(&env)).unwrap();
        assert_eq!(back, env);
    }
}
