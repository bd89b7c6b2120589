use std::collections::BTreeMap;

use ndarray::Array2;

use super::{dbscan, hungarian};
use crate::error::{Error, Result};
use crate::model::{
    euclidean_2d, extract_moving_instances, InstanceDescriptor, SegmentedScan, Track, TrackerConfig, Vec2,
};
use crate::nets::{similarity_cost, TrackerNets};

/// Geometric cost between tracks (rows) and detections (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentProblem {
    /// Predicted-center distance in meters.
    pub cost: Array2<f64>,
    pub forbidden: Array2<bool>,
    /// Entries in `(t_d1, t_d2]`, which need the similarity gate.
    pub gated: Array2<bool>,
    pub track_ids: Vec<u32>,
    pub instance_ids: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Association {
    /// `(track index, detection index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
    /// Cluster label of every track, then every detection, in the pooled
    /// center list used for locality.
    pub clusters: Vec<usize>,
}

/// Where a detection sits for association: offset-corrected or raw center.
pub fn detection_position(d: &InstanceDescriptor, config: &TrackerConfig) -> Vec2 {
    if config.use_offset {
        d.corrected_center
    } else {
        d.center
    }
}

/// Center a freshly matched track is expected at in the next scan, and the
/// per-scan displacement used while it goes unobserved.
fn next_prediction(d: &InstanceDescriptor, config: &TrackerConfig) -> (Vec2, Vec2) {
    if config.use_temporal_offset {
        (d.predicted_next_center, d.predicted_next_center - detection_position(d, config))
    } else {
        (detection_position(d, config), Vec2::ZERO)
    }
}

/// Distances between track predictions and detection positions. Entries above
/// `t_d2` are forbidden; entries in `(t_d1, t_d2]` are gated and, when a
/// similarity cost matrix is supplied, forbidden if their cost exceeds `t_c`.
pub fn build_cost(
    tracks: &[Track],
    detections: &[InstanceDescriptor],
    config: &TrackerConfig,
    similarity_cost: Option<&Array2<f64>>,
) -> AssignmentProblem {
    let shape = (tracks.len(), detections.len());
    if let Some(s) = similarity_cost {
        assert_eq!(s.dim(), shape, "similarity cost must be tracks x detections");
    }
    let cost = Array2::from_shape_fn(shape, |(i, j)| {
        euclidean_2d(tracks[i].predicted_center, detection_position(&detections[j], config))
    });
    let gated = cost.mapv(|d| d > config.t_d1 && d <= config.t_d2);
    let forbidden = Array2::from_shape_fn(shape, |(i, j)| {
        cost[[i, j]] > config.t_d2
            || (gated[[i, j]] && similarity_cost.is_some_and(|s| !(s[[i, j]] <= config.t_c)))
    });
    AssignmentProblem {
        cost,
        forbidden,
        gated,
        track_ids: tracks.iter().map(|t| t.track_id).collect(),
        instance_ids: detections.iter().map(|d| d.instance_id).collect(),
    }
}

/// Clusters the pooled track and detection centers with DBSCAN (radius `b`)
/// and solves one Hungarian problem per cluster.
pub fn associate(problem: &AssignmentProblem, track_centers: &[Vec2], detection_centers: &[Vec2], config: &TrackerConfig) -> Association {
    let (a, b) = problem.cost.dim();
    let pooled: Vec<Vec2> = track_centers.iter().chain(detection_centers).copied().collect();
    let labels = dbscan(&pooled, config.b, config.min_pts);
    // noise points become singleton clusters
    let mut next = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let clusters: Vec<usize> = labels
        .iter()
        .map(|l| {
            l.unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect();

    let mut members: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..a {
        members.entry(clusters[i]).or_default().0.push(i);
    }
    for j in 0..b {
        members.entry(clusters[a + j]).or_default().1.push(j);
    }
    let mut matches = Vec::new();
    for (rows, cols) in members.values() {
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let local = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| problem.cost[[rows[i], cols[j]]]);
        let forbid = Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| {
            problem.forbidden[[rows[i], cols[j]]]
        });
        for (i, j) in hungarian(&local, Some(&forbid)) {
            matches.push((rows[i], cols[j]));
        }
    }
    matches.sort_unstable();
    let mut track_used = vec![false; a];
    let mut det_used = vec![false; b];
    for &(i, j) in &matches {
        track_used[i] = true;
        det_used[j] = true;
    }
    Association {
        matches,
        unmatched_tracks: (0..a).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..b).filter(|&j| !det_used[j]).collect(),
        clusters,
    }
}

/// Persistent tracker state for one sequence.
#[derive(Clone, Debug)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    pub next_id: u32,
    pub config: TrackerConfig,
    nets: Option<TrackerNets>,
    last_t: Option<u32>,
    sequence_id: Option<String>,
}

impl TrackerState {
    /// `nets` is required when `config.use_similarity` is set.
    pub fn new(config: TrackerConfig, nets: Option<TrackerNets>) -> Result<Self> {
        config.validate()?;
        if config.use_similarity && nets.is_none() {
            return Err(Error::InvalidConfig(
                "similarity gating needs trained networks".into(),
            ));
        }
        let mut nets = nets;
        if let Some(n) = &mut nets {
            n.instance.n_local = config.n_local;
        }
        Ok(Self {
            tracks: Vec::new(),
            next_id: 1,
            config,
            nets,
            last_t: None,
            sequence_id: None,
        })
    }

    pub fn nets(&self) -> Option<&TrackerNets> {
        self.nets.as_ref()
    }

    /// Similarity cost between every active track and every detection.
    fn similarity(&self, detections: &[InstanceDescriptor]) -> Result<Option<Array2<f64>>> {
        if !self.config.use_similarity || self.tracks.is_empty() || detections.is_empty() {
            return Ok(None);
        }
        let nets = self.nets.as_ref().expect("checked in new");
        let dim = nets.instance.d_out();
        let rows = |items: &mut dyn Iterator<Item = &Vec<f64>>, n: usize| -> Array2<f64> {
            let mut m = Array2::zeros((n, dim));
            for (i, f) in items.enumerate() {
                m.row_mut(i).iter_mut().zip(f).for_each(|(d, s)| *d = *s);
            }
            m
        };
        let ft = rows(&mut self.tracks.iter().map(|t| &t.descriptor.feature), self.tracks.len());
        let fd = rows(&mut detections.iter().map(|d| &d.feature), detections.len());
        let ct: Vec<Vec2> = self.tracks.iter().map(|t| t.predicted_center).collect();
        let cd: Vec<Vec2> = detections.iter().map(|d| detection_position(d, &self.config)).collect();
        let scores = nets.similarity.similarity_scores(&ft, &ct, &fd, &cd)?;
        Ok(Some(similarity_cost(&scores, self.config.epsilon)))
    }

    /// Builds the cost, gates it and solves the local assignment problems.
    pub fn associate_scan(&self, detections: &[InstanceDescriptor]) -> Result<Association> {
        let sim = self.similarity(detections)?;
        let problem = build_cost(&self.tracks, detections, &self.config, sim.as_ref());
        let tc: Vec<Vec2> = self.tracks.iter().map(|t| t.predicted_center).collect();
        let dc: Vec<Vec2> = detections.iter().map(|d| detection_position(d, &self.config)).collect();
        Ok(associate(&problem, &tc, &dc, &self.config))
    }

    /// Applies an association result: updates matched tracks, propagates and
    /// ages unmatched ones (retiring those past the retention limit) and opens
    /// tracks for unmatched detections. Returns the track ID per detection.
    pub fn lifecycle_step(&mut self, t: u32, detections: Vec<InstanceDescriptor>, assoc: &Association) -> Vec<u32> {
        let mut ids = vec![0; detections.len()];
        let mut detections: Vec<Option<InstanceDescriptor>> = detections.into_iter().map(Some).collect();
        let mut matched = vec![false; self.tracks.len()];
        for &(ti, di) in &assoc.matches {
            let d = detections[di].take().expect("one-to-one matching");
            let (predicted, velocity) = next_prediction(&d, &self.config);
            let track = &mut self.tracks[ti];
            track.history.push((t, d.instance_id));
            track.descriptor = d;
            track.predicted_center = predicted;
            track.velocity = velocity;
            track.misses = 0;
            track.age += 1;
            matched[ti] = true;
            ids[di] = track.track_id;
        }
        let retention = self.config.retention;
        for (track, _) in self.tracks.iter_mut().zip(&matched).filter(|(_, &m)| !m) {
            track.predicted_center += track.velocity;
            track.misses += 1;
            track.age += 1;
        }
        self.tracks.retain(|tr| tr.misses <= retention);
        for &di in &assoc.unmatched_detections {
            let d = detections[di].take().expect("unmatched detection consumed once");
            let (predicted, velocity) = next_prediction(&d, &self.config);
            let id = self.next_id;
            self.next_id += 1;
            ids[di] = id;
            self.tracks.push(Track {
                track_id: id,
                history: vec![(t, d.instance_id)],
                descriptor: d,
                predicted_center: predicted,
                velocity,
                misses: 0,
                age: 1,
            });
        }
        ids
    }

    /// Processes one scan and returns a track ID per point (0 for points that
    /// are not part of a moving instance).
    pub fn step(&mut self, scan: &SegmentedScan) -> Result<Vec<u32>> {
        let t = scan.scan.t;
        if let (Some(prev), Some(seq)) = (self.last_t, &self.sequence_id) {
            if t <= prev && *seq == scan.scan.sequence_id {
                return Err(Error::NonMonotoneTime {
                    seq: seq.clone(),
                    prev,
                    t,
                });
            }
        }
        self.last_t = Some(t);
        self.sequence_id = Some(scan.scan.sequence_id.clone());

        let mut detections = extract_moving_instances(scan);
        if self.config.use_similarity {
            if let Some(nets) = &self.nets {
                nets.instance.instance_features(scan, &mut detections)?;
            }
        }
        let assoc = self.associate_scan(&detections)?;
        let members: Vec<Vec<usize>> = detections.iter().map(|d| d.point_indices.clone()).collect();
        let ids = self.lifecycle_step(t, detections, &assoc);
        let mut per_point = vec![0; scan.len()];
        for (m, id) in members.iter().zip(ids) {
            for &i in m {
                per_point[i] = id;
            }
        }
        Ok(per_point)
    }
}

/// Runs the tracker over one sequence and returns per-point track IDs per scan.
pub fn run_tracker(
    scans: &[SegmentedScan],
    config: &TrackerConfig,
    nets: Option<&TrackerNets>,
) -> Result<Vec<Vec<u32>>> {
    let mut state = TrackerState::new(config.clone(), nets.cloned())?;
    scans.iter().map(|s| state.step(s)).collect()
}
