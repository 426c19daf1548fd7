use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::frame::corrupt;
use super::{DemoFrame, RecordingError};
use crate::engine::EngineConfig;
use crate::protocol::{encode_message, Envelope, Message, RecordStatus};
use crate::retargeting::HandFrame;
use crate::scene::{EVENT_COLLISION, EVENT_SPEED, EVENT_VISIBILITY};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const FRAMES_PER_CHUNK: usize = 60;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const HANDS_FILE: &str = "hands.bin";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventTotals {
    /// Ticks with at least one event of each kind.
    pub collision: u64,
    pub speed_limit: u64,
    pub visibility_loss: u64,
}

impl EventTotals {
    fn add(&mut self, mask: u8) {
        self.collision += (mask & EVENT_COLLISION != 0) as u64;
        self.speed_limit += (mask & EVENT_SPEED != 0) as u64;
        self.visibility_loss += (mask & EVENT_VISIBILITY != 0) as u64;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub file: String,
    pub frames: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub id: String,
    pub status: RecordStatus,
    pub frame_count: u64,
    pub event_totals: EventTotals,
    pub config: EngineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hands: Option<FileEntry>,
    #[serde(default)]
    pub chunks: Vec<FileEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest, RecordingError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| RecordingError::Io(path.display().to_string(), e))?;
        let m: Manifest = toml::from_str(&text).map_err(|e| RecordingError::Manifest(e.to_string()))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(RecordingError::Manifest(format!("unsupported schema {}", m.schema)));
        }
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<(), RecordingError> {
        let text = toml::to_string(self).map_err(|e| RecordingError::Manifest(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RecordingError> {
    let tmp = path.with_extension("tmp");
    let io = |e| RecordingError::Io(path.display().to_string(), e);
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn session_dir(root: &Path, id: &str) -> PathBuf {
    root.join(format!("session-{id}"))
}

pub fn validate_session_id(id: &str) -> Result<(), RecordingError> {
    let ok = !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(RecordingError::InvalidId(id.to_string()))
    }
}

/// Unique within the process and, in practice, across runs.
pub fn generate_session_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let ms = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    format!("{ms}-{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed))
}

/// Appends frames to a session directory, flushing a chunk every
/// [`FRAMES_PER_CHUNK`] frames.
#[derive(Debug)]
pub struct SessionWriter {
    dir: PathBuf,
    manifest: Manifest,
    pending: Vec<u8>,
    pending_frames: usize,
    pending_hands: Vec<u8>,
    hand_frames: u64,
    last_timestamp: Option<f64>,
}

impl SessionWriter {
    pub fn create(root: &Path, id: Option<&str>, config: &EngineConfig) -> Result<Self, RecordingError> {
        let id = match id {
            Some(id) => {
                validate_session_id(id)?;
                id.to_string()
            }
            None => generate_session_id(),
        };
        let dir = session_dir(root, &id);
        fs::create_dir_all(root).map_err(|e| RecordingError::Io(root.display().to_string(), e))?;
        fs::create_dir(&dir).map_err(|e| RecordingError::Io(dir.display().to_string(), e))?;
        let manifest = Manifest {
            schema: MANIFEST_SCHEMA,
            id,
            status: RecordStatus::Recording,
            frame_count: 0,
            event_totals: EventTotals::default(),
            config: config.clone(),
            hands: None,
            chunks: Vec::new(),
        };
        manifest.write(&dir)?;
        Ok(SessionWriter {
            dir,
            manifest,
            pending: Vec::new(),
            pending_frames: 0,
            pending_hands: Vec::new(),
            hand_frames: 0,
            last_timestamp: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.id
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn status(&self) -> RecordStatus {
        self.manifest.status
    }

    pub fn frame_count(&self) -> u64 {
        self.manifest.frame_count
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn require_recording(&self, op: &str) -> Result<(), RecordingError> {
        match self.manifest.status {
            RecordStatus::Recording => Ok(()),
            s => Err(RecordingError::State(format!("cannot {op} a {s:?} session"))),
        }
    }

    /// Appends a frame and, when given, the hand sample that produced it.
    pub fn append(&mut self, frame: &DemoFrame, hand: Option<&HandFrame>) -> Result<(), RecordingError> {
        self.require_recording("append to")?;
        if let Some(last) = self.last_timestamp {
            if !(frame.timestamp > last) {
                return Err(RecordingError::Ordering {
                    last,
                    got: frame.timestamp,
                });
            }
        }
        frame.encode(&mut self.pending);
        if let Some(h) = hand {
            self.pending_hands.extend(encode_message(&Envelope {
                seq: self.hand_frames,
                message: Message::HandFrame { frame: *h, cloud: None },
            }));
            self.hand_frames += 1;
        }
        self.pending_frames += 1;
        self.last_timestamp = Some(frame.timestamp);
        self.manifest.frame_count += 1;
        self.manifest.event_totals.add(frame.events);
        if self.pending_frames == FRAMES_PER_CHUNK {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), RecordingError> {
        if self.pending_frames > 0 {
            let name = format!("chunk-{:05}.bin", self.manifest.chunks.len());
            write_atomic(&self.dir.join(&name), &self.pending)?;
            self.manifest.chunks.push(FileEntry {
                file: name,
                frames: self.pending_frames as u64,
                sha256: sha256_hex(&self.pending),
            });
            self.pending.clear();
            self.pending_frames = 0;
        }
        if !self.pending_hands.is_empty() {
            use std::io::Write;
            let path = self.dir.join(HANDS_FILE);
            let io = |e| RecordingError::Io(path.display().to_string(), e);
            let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
            f.write_all(&self.pending_hands).map_err(io)?;
            self.pending_hands.clear();
        }
        self.manifest.write(&self.dir)
    }

    /// Flushes remaining frames and seals the session.
    pub fn finalize(&mut self) -> Result<&Manifest, RecordingError> {
        self.require_recording("finalize")?;
        self.flush()?;
        if self.hand_frames > 0 {
            let path = self.dir.join(HANDS_FILE);
            let bytes = fs::read(&path).map_err(|e| RecordingError::Io(path.display().to_string(), e))?;
            self.manifest.hands = Some(FileEntry {
                file: HANDS_FILE.into(),
                frames: self.hand_frames,
                sha256: sha256_hex(&bytes),
            });
        }
        self.manifest.status = RecordStatus::Finalized;
        self.manifest.write(&self.dir)?;
        Ok(&self.manifest)
    }

    /// Deletes the payload, leaving a tombstone manifest.
    pub fn discard(&mut self) -> Result<&Manifest, RecordingError> {
        self.require_recording("discard")?;
        self.pending.clear();
        self.pending_hands.clear();
        self.pending_frames = 0;
        remove_payload(&self.dir, &mut self.manifest)?;
        Ok(&self.manifest)
    }
}

fn remove_payload(dir: &Path, manifest: &mut Manifest) -> Result<(), RecordingError> {
    let entries = fs::read_dir(dir).map_err(|e| RecordingError::Io(dir.display().to_string(), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| RecordingError::Io(dir.display().to_string(), e))?;
        let name = entry.file_name();
        if name != MANIFEST_FILE {
            fs::remove_file(entry.path()).map_err(|e| RecordingError::Io(entry.path().display().to_string(), e))?;
        }
    }
    manifest.chunks.clear();
    manifest.hands = None;
    manifest.status = RecordStatus::Discarded;
    manifest.write(dir)
}

/// Discards a session left on disk in the Recording state (for example by
/// an interrupted writer).
pub fn discard_session(dir: &Path) -> Result<Manifest, RecordingError> {
    let mut m = Manifest::read(dir)?;
    if m.status != RecordStatus::Recording {
        return Err(RecordingError::State(format!("cannot discard a {:?} session", m.status)));
    }
    remove_payload(dir, &mut m)?;
    Ok(m)
}

/// Read-only view of a session directory.
#[derive(Debug, Clone)]
pub struct Session {
    dir: PathBuf,
    manifest: Manifest,
}

impl Session {
    pub fn open(dir: &Path) -> Result<Session, RecordingError> {
        Ok(Session {
            dir: dir.to_path_buf(),
            manifest: Manifest::read(dir)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn require_finalized(&self) -> Result<(), RecordingError> {
        match self.manifest.status {
            RecordStatus::Finalized => Ok(()),
            s => Err(RecordingError::State(format!("session is {s:?}, not finalized"))),
        }
    }

    /// Reads and verifies every frame.
    pub fn frames(&self) -> Result<Vec<DemoFrame>, RecordingError> {
        let mut frames = Vec::with_capacity(self.manifest.frame_count as usize);
        for chunk in &self.manifest.chunks {
            let first = frames.len();
            let path = self.dir.join(&chunk.file);
            let bytes = fs::read(&path).map_err(|_| corrupt(first, format!("{} is missing", chunk.file)))?;
            let mut pos = 0;
            for k in 0..chunk.frames as usize {
                let (f, used) = DemoFrame::decode(&bytes[pos..]).map_err(|(at, why)| {
                    corrupt(first + k, format!("{} byte {}: {why}", chunk.file, pos + at))
                })?;
                if let Some(prev) = frames.last().map(|p: &DemoFrame| p.timestamp) {
                    if !(f.timestamp > prev) {
                        return Err(corrupt(first + k, "timestamps out of order"));
                    }
                }
                frames.push(f);
                pos += used;
            }
            if pos != bytes.len() {
                return Err(corrupt(frames.len().saturating_sub(1), format!("{} has trailing bytes", chunk.file)));
            }
            if sha256_hex(&bytes) != chunk.sha256 {
                return Err(corrupt(first, format!("{} checksum mismatch", chunk.file)));
            }
        }
        if frames.len() as u64 != self.manifest.frame_count {
            return Err(corrupt(frames.len(), "frame count disagrees with manifest"));
        }
        Ok(frames)
    }

    /// Path of the raw hand stream, if one was recorded.
    pub fn hands_path(&self) -> Option<PathBuf> {
        self.manifest.hands.as_ref().map(|h| self.dir.join(&h.file))
    }
}
