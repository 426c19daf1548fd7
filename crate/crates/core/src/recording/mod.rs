//! Demonstration sessions: on-disk container, post-processing, export.

mod frame;
mod postprocess;
mod session;

use thiserror::Error;

pub use frame::{quantize_pose, DemoFrame};
pub use postprocess::{
    export_frames, fibonacci_sphere, postprocess_session, render_robot_cloud, robot_surface_points, PointSource,
    ProcessedFrame, DEFAULT_SAMPLES_PER_SPHERE, LINK_COLORS,
};
pub use session::{
    discard_session, generate_session_id, session_dir, validate_session_id, EventTotals, FileEntry, Manifest,
    Session, SessionWriter, FRAMES_PER_CHUNK, HANDS_FILE, MANIFEST_FILE, MANIFEST_SCHEMA,
};

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("state error: {0}")]
    State(String),
    #[error("frame at t={got} does not follow t={last}")]
    Ordering { last: f64, got: f64 },
    #[error("corrupt session data at frame {frame}: {reason}")]
    Integrity { frame: usize, reason: String },
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("invalid session id '{0}'")]
    InvalidId(String),
    #[error("export failed: {0}")]
    Export(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
