//! Real-time retargeting, feedback and demonstration-recording engine for
//! AR-guided robot data capture without robot hardware.

pub mod kinematics;
pub mod retargeting;
pub mod scene;
pub mod engine;
pub mod protocol;
pub mod recording;
pub mod simulate;
pub mod analysis;
