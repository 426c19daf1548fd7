//! Offline demonstration quality: would a robot be able to replay this?

use serde::{Deserialize, Serialize};

use crate::recording::{RecordingError, Session};
use crate::scene::{check_visibility, EVENT_COLLISION, EVENT_SPEED};

/// Speed-mismatch ticks a replayable session may contain: about 83 ms at
/// 60 Hz, enough to absorb brief tracker glitches.
pub const DEFAULT_SPEED_TOLERANCE_TICKS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisThresholds {
    /// Minimum visible fraction of the watch points; `None` uses the
    /// session's configured threshold.
    pub visibility: Option<f64>,
    pub speed_tolerance_ticks: u64,
}

impl Default for AnalysisThresholds {
    fn default() -> Self {
        AnalysisThresholds {
            visibility: None,
            speed_tolerance_ticks: DEFAULT_SPEED_TOLERANCE_TICKS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub session_id: String,
    pub frame_count: u64,
    pub collision_ticks: u64,
    pub speed_mismatch_ticks: u64,
    pub min_visible_fraction: f64,
    pub mean_visible_fraction: f64,
    pub visibility_threshold: f64,
    pub speed_tolerance_ticks: u64,
    pub replayable: bool,
}

impl QualityReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn summary(&self) -> String {
        format!(
            "session {}: {} frames, {} collision ticks, {} speed-mismatch ticks (tolerance {}), visibility min {:.3} mean {:.3} (threshold {:.2}) -> {}",
            self.session_id,
            self.frame_count,
            self.collision_ticks,
            self.speed_mismatch_ticks,
            self.speed_tolerance_ticks,
            self.min_visible_fraction,
            self.mean_visible_fraction,
            self.visibility_threshold,
            if self.replayable { "replayable" } else { "NOT replayable" }
        )
    }
}

/// Counts event ticks from the recorded masks and recomputes visibility
/// from the recorded headset poses. A session with no frames is not
/// replayable.
pub fn analyze_session(session: &Session, thresholds: &AnalysisThresholds) -> Result<QualityReport, RecordingError> {
    session.require_finalized()?;
    let manifest = session.manifest();
    let config = &manifest.config;
    let threshold = thresholds.visibility.unwrap_or(config.visibility_threshold);
    let watch = config.watch_points();
    let frames = session.frames()?;

    let mut collision_ticks = 0;
    let mut speed_ticks = 0;
    let mut min_vis = 1.0f64;
    let mut sum_vis = 0.0;
    for f in &frames {
        collision_ticks += (f.events & EVENT_COLLISION != 0) as u64;
        speed_ticks += (f.events & EVENT_SPEED != 0) as u64;
        let cam = config.camera.world_pose(&f.headset.renormalized());
        let v = check_visibility(&cam, &config.camera, &watch, threshold)
            .expect("watch points are non-empty")
            .fraction;
        min_vis = min_vis.min(v);
        sum_vis += v;
    }
    let n = frames.len() as u64;
    let mean_vis = if n == 0 { 1.0 } else { sum_vis / n as f64 };
    let replayable =
        n > 0 && collision_ticks == 0 && speed_ticks <= thresholds.speed_tolerance_ticks && min_vis >= threshold;
    Ok(QualityReport {
        session_id: manifest.id.clone(),
        frame_count: n,
        collision_ticks,
        speed_mismatch_ticks: speed_ticks,
        min_visible_fraction: min_vis,
        mean_visible_fraction: mean_vis,
        visibility_threshold: threshold,
        speed_tolerance_ticks: thresholds.speed_tolerance_ticks,
        replayable,
    })
}
