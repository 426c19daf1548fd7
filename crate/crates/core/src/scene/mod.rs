//! Scene occupancy, collision, camera visibility and feedback state.

mod camera;
mod cloud;
mod feedback;
mod grid;

pub use camera::{check_visibility, CameraError, CameraModel, Visibility, DEFAULT_VISIBILITY_THRESHOLD};
pub use cloud::{CloudError, ColoredPointCloud, CLOUD_MAGIC, POINT_RECORD_LEN};
pub use feedback::{
    blink_phase, detect_speed_mismatch, event_mask, FeedbackDisplay, FeedbackEvent, FrameColor, SpeedMismatch,
    BLINK_HALF_PERIOD, DEFAULT_SPEED_ORIENTATION_THRESHOLD, DEFAULT_SPEED_POSITION_THRESHOLD, EVENT_COLLISION,
    EVENT_SPEED, EVENT_VISIBILITY,
};
pub use grid::{check_collision, voxelize, VoxelGrid, DEFAULT_MARGIN, DEFAULT_RESOLUTION};
