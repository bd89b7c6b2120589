//! Reference trackers for comparison: Doppler-propagated center tracking and
//! an IoU-cost constant-velocity Kalman tracker.

mod center;
mod kalman;

pub use center::center_doppler_tracker;
pub use kalman::{box_iou, kalman_iou_tracker, BoundingBox, KalmanTrack};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SegmentedScan;

/// Parameters shared by the baseline trackers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    /// Seconds per scan.
    pub dt: f64,
    /// White-acceleration std, m/s².
    pub process_noise: f64,
    /// Position measurement std, m.
    pub measurement_noise: f64,
    /// Matches below this IoU are rejected.
    pub min_iou: f64,
    /// Initial velocity std of a new Kalman track, m/s.
    pub initial_velocity_std: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            dt: 0.5,
            process_noise: 0.5,
            measurement_noise: 0.1,
            min_iou: 0.01,
            initial_velocity_std: 5.0,
        }
    }
}

impl BaselineParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.process_noise >= 0.0
            && self.measurement_noise >= 0.0
            && self.initial_velocity_std >= 0.0
            && (0.0..=1.0).contains(&self.min_iou)
            && [self.dt, self.process_noise, self.measurement_noise, self.initial_velocity_std]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid baseline parameters {self:?}")))
        }
    }
}

/// Names accepted by [`run_baseline`].
pub const BASELINE_NAMES: [&str; 2] = ["center_doppler", "kalman_iou"];

/// Dispatches to a baseline by name.
pub fn run_baseline(
    name: &str,
    scans: &[SegmentedScan],
    config: &crate::model::TrackerConfig,
    params: &BaselineParams,
) -> Result<Vec<Vec<u32>>> {
    match name {
        "center_doppler" => center_doppler_tracker(scans, config, params),
        "kalman_iou" => kalman_iou_tracker(scans, config, params),
        other => Err(Error::InvalidConfig(format!(
            "unknown baseline {other:?}, expected one of {BASELINE_NAMES:?}"
        ))),
    }
}

/// Spreads per-instance IDs back onto the points of a scan.
fn per_point_ids(len: usize, members: &[Vec<usize>], ids: &[u32]) -> Vec<u32> {
    let mut out = vec![0; len];
    for (m, &id) in members.iter().zip(ids) {
        for &i in m {
            out[i] = id;
        }
    }
    out
}
