use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::RecordingError;
use crate::kinematics::{JointConfig, Pose};
use crate::retargeting::GripperCommand;
use crate::scene::{event_mask, ColoredPointCloud, FeedbackEvent};

const GRIPPER_PRESENT: u8 = 0x80;
const GRIPPER_OPEN: u8 = 0x01;

/// One recorded tick. Joint angles and poses are held at the f32 precision
/// they are stored with, so a frame reads back exactly as appended.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoFrame {
    pub timestamp: f64,
    /// Camera frame.
    pub cloud: ColoredPointCloud,
    pub q: JointConfig,
    /// World frame.
    pub headset: Pose,
    /// Virtual robot base, world frame.
    pub base: Pose,
    pub gripper: Option<GripperCommand>,
    /// Bit mask of the event kinds that fired this tick.
    pub events: u8,
}

impl DemoFrame {
    pub fn new(
        timestamp: f64,
        cloud: ColoredPointCloud,
        q: &JointConfig,
        headset: &Pose,
        base: &Pose,
        gripper: Option<GripperCommand>,
        events: &[FeedbackEvent],
    ) -> DemoFrame {
        DemoFrame {
            timestamp,
            cloud,
            q: JointConfig::new(q.iter().map(|&v| v as f32 as f64).collect()),
            headset: quantize_pose(headset),
            base: quantize_pose(base),
            gripper,
            events: event_mask(events),
        }
    }

    pub fn encoded_len(&self) -> usize {
        8 + 4 + self.cloud.len() * crate::scene::POINT_RECORD_LEN + 2 + 4 * self.q.len() + 2 * 28 + 2
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&(self.cloud.len() as u32).to_le_bytes());
        self.cloud.write_records(out);
        out.extend_from_slice(&(self.q.len() as u16).to_le_bytes());
        for &v in self.q.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for pose in [&self.headset, &self.base] {
            let p = pose.position;
            let [w, x, y, z] = pose.wxyz();
            for v in [p.x, p.y, p.z, w, x, y, z] {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out.push(match self.gripper {
            None => 0,
            Some(GripperCommand::Closed) => GRIPPER_PRESENT,
            Some(GripperCommand::Open) => GRIPPER_PRESENT | GRIPPER_OPEN,
        });
        out.push(self.events);
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// bytes consumed. Errors carry the byte offset within `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<(DemoFrame, usize), (usize, String)> {
        let mut r = Reader { bytes, pos: 0 };
        let timestamp = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if !timestamp.is_finite() {
            return Err((0, "non-finite timestamp".into()));
        }
        let n = r.u32()? as usize;
        let start = r.pos;
        let (cloud, used) = ColoredPointCloud::read_records(&bytes[start..], n).map_err(|e| (start, e.to_string()))?;
        r.pos += used;
        let dof = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let mut q = Vec::with_capacity(dof);
        for _ in 0..dof {
            q.push(r.f32()? as f64);
        }
        let mut poses = [Pose::identity(); 2];
        for pose in &mut poses {
            let at = r.pos;
            let mut v = [0f64; 7];
            for x in &mut v {
                *x = r.f32()? as f64;
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err((at, "non-finite pose".into()));
            }
            *pose = pose_from_parts([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]).ok_or((at, "degenerate quaternion".to_string()))?;
        }
        let at = r.pos;
        let g = r.take(1)?[0];
        let gripper = match g {
            0 => None,
            GRIPPER_PRESENT => Some(GripperCommand::Closed),
            x if x == GRIPPER_PRESENT | GRIPPER_OPEN => Some(GripperCommand::Open),
            _ => return Err((at, format!("bad gripper byte {g:#04x}"))),
        };
        let at = r.pos;
        let events = r.take(1)?[0];
        if events & !0b111 != 0 {
            return Err((at, format!("bad event mask {events:#04x}")));
        }
        Ok((
            DemoFrame {
                timestamp,
                cloud,
                q: JointConfig::new(q),
                headset: poses[0],
                base: poses[1],
                gripper,
                events,
            },
            r.pos,
        ))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], (usize, String)> {
        if self.bytes.len() - self.pos < n {
            return Err((self.bytes.len(), "truncated frame".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, (usize, String)> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, (usize, String)> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Rounds position and quaternion components to f32. The quaternion is
/// kept as rounded rather than renormalized so the value survives storage.
pub fn quantize_pose(p: &Pose) -> Pose {
    let f = |v: f64| v as f32 as f64;
    let [w, x, y, z] = p.wxyz();
    pose_from_parts(
        [f(p.position.x), f(p.position.y), f(p.position.z)],
        [f(w), f(x), f(y), f(z)],
    )
    .expect("unit quaternion stays non-degenerate")
}

fn pose_from_parts(pos: [f64; 3], wxyz: [f64; 4]) -> Option<Pose> {
    let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
    let norm = q.norm();
    if !(norm > 1e-6) {
        return None;
    }
    let orientation = if (norm - 1.0).abs() <= 1e-6 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::new_normalize(q)
    };
    Some(Pose::new(Vector3::from(pos), orientation))
}

pub(crate) fn corrupt(frame: usize, reason: impl Into<String>) -> RecordingError {
    RecordingError::Integrity {
        frame,
        reason: reason.into(),
    }
}
