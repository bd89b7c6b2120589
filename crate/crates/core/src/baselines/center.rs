use super::{per_point_ids, BaselineParams};
use crate::association::{build_cost, hungarian, Association, TrackerState};
use crate::error::Result;
use crate::model::{extract_moving_instances, SegmentedScan, TrackerConfig, Vec2};

/// Tracks raw instance centers, predicting each one along its line of sight
/// by the mean member Doppler times `dt`. One global Hungarian problem per
/// scan, gated at `t_d2`, with the regular track lifecycle.
pub fn center_doppler_tracker(
    scans: &[SegmentedScan],
    config: &TrackerConfig,
    params: &BaselineParams,
) -> Result<Vec<Vec<u32>>> {
    params.validate()?;
    let config = TrackerConfig {
        use_similarity: false,
        use_offset: false,
        use_temporal_offset: true,
        ..config.clone()
    };
    let mut state = TrackerState::new(config.clone(), None)?;
    let mut out = Vec::with_capacity(scans.len());
    for scan in scans {
        let mut detections = extract_moving_instances(scan);
        for d in &mut detections {
            let v = d.point_indices.iter().map(|&i| scan.scan.points[i].v).sum::<f64>() / d.point_indices.len() as f64;
            let r = d.center.norm();
            let step = if r > 0.0 { d.center * (v * params.dt / r) } else { Vec2::ZERO };
            d.corrected_center = d.center;
            d.predicted_next_center = d.center + step;
        }
        let problem = build_cost(&state.tracks, &detections, &config, None);
        let matches = hungarian(&problem.cost, Some(&problem.forbidden));
        let assoc = association_from(matches, problem.cost.dim());
        let members: Vec<Vec<usize>> = detections.iter().map(|d| d.point_indices.clone()).collect();
        let ids = state.lifecycle_step(scan.scan.t, detections, &assoc);
        out.push(per_point_ids(scan.len(), &members, &ids));
    }
    Ok(out)
}

pub(super) fn association_from(matches: Vec<(usize, usize)>, (rows, cols): (usize, usize)) -> Association {
    let mut tu = vec![false; rows];
    let mut du = vec![false; cols];
    for &(i, j) in &matches {
        tu[i] = true;
        du[j] = true;
    }
    Association {
        matches,
        unmatched_tracks: (0..rows).filter(|&i| !tu[i]).collect(),
        unmatched_detections: (0..cols).filter(|&j| !du[j]).collect(),
        clusters: Vec::new(),
    }
}
