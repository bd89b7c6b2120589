//! Domain value types shared by every stage of the tracker.

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or displacement in the ego-compensated 2D frame, in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x / rhs, self.y / rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// One radar detection. `v` is the ego-motion compensated radial Doppler
/// velocity (positive = receding), `rcs` the radar cross section in dBsm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub rcs: f64,
}

impl RadarPoint {
    pub const fn new(x: f64, y: f64, v: f64, rcs: f64) -> Self {
        Self { x, y, v, rcs }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// The raw per-point network input, `[x, y, rcs, v]`.
    pub fn features(&self) -> [f64; 4] {
        [self.x, self.y, self.rcs, self.v]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite() && self.rcs.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarScan {
    pub sequence_id: String,
    pub t: u32,
    pub points: Vec<RadarPoint>,
}

impl RadarScan {
    pub fn new(sequence_id: impl Into<String>, t: u32, points: Vec<RadarPoint>) -> Self {
        Self {
            sequence_id: sequence_id.into(),
            t,
            points,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Semantic {
    #[default]
    Static,
    Moving,
}

impl Semantic {
    pub fn from_flag(flag: u8) -> Option<Self> {
        match flag {
            0 => Some(Semantic::Static),
            1 => Some(Semantic::Moving),
            _ => None,
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Semantic::Static => 0,
            Semantic::Moving => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Semantic::Static => Semantic::Moving,
            Semantic::Moving => Semantic::Static,
        }
    }
}

/// A scan together with the segmentation output the tracker consumes:
/// semantics, instance IDs (0 = static/none) and the two offset fields.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentedScan {
    pub scan: RadarScan,
    pub semantics: Vec<Semantic>,
    pub instance_ids: Vec<u32>,
    pub offsets: Vec<Vec2>,
    pub temporal_offsets: Vec<Vec2>,
}

impl SegmentedScan {
    pub fn new(
        scan: RadarScan,
        semantics: Vec<Semantic>,
        instance_ids: Vec<u32>,
        offsets: Vec<Vec2>,
        temporal_offsets: Vec<Vec2>,
    ) -> Result<Self> {
        let s = Self {
            scan,
            semantics,
            instance_ids,
            offsets,
            temporal_offsets,
        };
        s.validate()?;
        Ok(s)
    }

    /// Every point static, no offsets.
    pub fn all_static(scan: RadarScan) -> Self {
        let n = scan.len();
        Self {
            scan,
            semantics: vec![Semantic::Static; n],
            instance_ids: vec![0; n],
            offsets: vec![Vec2::ZERO; n],
            temporal_offsets: vec![Vec2::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.scan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scan.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.scan.len();
        for (name, len) in [
            ("semantics", self.semantics.len()),
            ("instance_ids", self.instance_ids.len()),
            ("offsets", self.offsets.len()),
            ("temporal_offsets", self.temporal_offsets.len()),
        ] {
            if len != n {
                return Err(Error::Invariant(format!(
                    "{name} has length {len}, scan has {n} points"
                )));
            }
        }
        for (i, p) in self.scan.points.iter().enumerate() {
            if !p.is_finite() || !self.offsets[i].is_finite() || !self.temporal_offsets[i].is_finite()
            {
                return Err(Error::Invariant(format!("point {i} has a non-finite field")));
            }
            match (self.semantics[i], self.instance_ids[i]) {
                (Semantic::Moving, 0) => {
                    return Err(Error::Invariant(format!(
                        "moving point {i} has instance id 0"
                    )))
                }
                (Semantic::Static, id) if id != 0 => {
                    return Err(Error::Invariant(format!(
                        "static point {i} has instance id {id}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// A segmented scan plus one track ID per point (0 = none). Depending on the
/// source these are ground-truth or predicted identities.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotatedScan {
    pub segmented: SegmentedScan,
    pub track_ids: Vec<u32>,
}

impl AnnotatedScan {
    pub fn t(&self) -> u32 {
        self.segmented.scan.t
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InstanceDescriptor {
    pub instance_id: u32,
    pub point_indices: Vec<usize>,
    pub center: Vec2,
    /// `center` plus the mean standard offset of the members.
    pub corrected_center: Vec2,
    /// `center` plus the mean temporal offset of the members.
    pub predicted_next_center: Vec2,
    pub feature: Vec<f64>,
}

impl InstanceDescriptor {
    pub fn mean_temporal_offset(&self) -> Vec2 {
        self.predicted_next_center - self.center
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub track_id: u32,
    pub descriptor: InstanceDescriptor,
    pub predicted_center: Vec2,
    /// Per-scan displacement used while the track is unobserved.
    pub velocity: Vec2,
    pub misses: u32,
    pub age: u32,
    pub history: Vec<(u32, u32)>,
}

/// Thresholds, network dimensions and association switches. Serialized as a
/// flat JSON object; missing keys take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Below this predicted-center distance association is purely geometric.
    pub t_d1: f64,
    /// Above this distance association is omitted.
    pub t_d2: f64,
    /// Maximum similarity cost accepted for gated matches.
    pub t_c: f64,
    /// DBSCAN radius used to form local association problems.
    pub b: f64,
    pub min_pts: usize,
    /// Scans a track survives without a match.
    pub retention: u32,
    pub n_local: usize,
    pub d_in: usize,
    pub d1: usize,
    pub d2: usize,
    pub offset_hidden: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Gate matches in `(t_d1, t_d2]` on the similarity cost.
    pub use_similarity: bool,
    /// Detections are placed at `center + mean O`.
    pub use_offset: bool,
    /// Tracks are propagated with the mean temporal offset.
    pub use_temporal_offset: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            t_d1: 5.0,
            t_d2: 10.0,
            t_c: 1.5,
            b: 10.0,
            min_pts: 1,
            retention: 12,
            n_local: 6,
            d_in: 4,
            d1: 64,
            d2: 256,
            offset_hidden: 64,
            epsilon: 1e-6,
            seed: 0,
            use_similarity: true,
            use_offset: true,
            use_temporal_offset: true,
        }
    }
}

impl TrackerConfig {
    pub fn geometric_only() -> Self {
        Self {
            use_similarity: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.t_d1 > 0.0 && self.t_d1 <= self.t_d2 && self.t_d2.is_finite()) {
            return bad("require 0 < t_d1 <= t_d2");
        }
        if !(self.t_c > 0.0) {
            return bad("require t_c > 0");
        }
        if !(self.b > 0.0) {
            return bad("require b > 0");
        }
        if self.min_pts == 0 {
            return bad("require min_pts >= 1");
        }
        if self.n_local == 0 {
            return bad("require n_local >= 1");
        }
        if self.d_in != 4 {
            return bad("the point feature dimension is fixed at 4 (x, y, rcs, v)");
        }
        if self.d1 == 0 || self.d2 == 0 || self.offset_hidden == 0 {
            return bad("network widths must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("require epsilon > 0");
        }
        Ok(())
    }
}

/// Arithmetic mean of a non-empty point list.
pub fn instance_center(points: &[Vec2]) -> Result<Vec2> {
    if points.is_empty() {
        return Err(Error::Empty("instance_center"));
    }
    let sum = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    let c = sum / points.len() as f64;
    if !c.is_finite() {
        return Err(Error::NonFinite("instance_center"));
    }
    Ok(c)
}

pub fn euclidean_2d(a: Vec2, b: Vec2) -> f64 {
    (a - b).norm()
}

/// Groups moving points by instance ID, ordered by ascending ID. Features are
/// left empty for the instance network to fill.
pub fn extract_moving_instances(scan: &SegmentedScan) -> Vec<InstanceDescriptor> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, (&sem, &id)) in scan.semantics.iter().zip(&scan.instance_ids).enumerate() {
        if sem == Semantic::Moving && id > 0 {
            groups.entry(id).or_default().push(i);
        }
    }
    groups
        .into_iter()
        .map(|(instance_id, point_indices)| {
            let k = point_indices.len() as f64;
            let mut center = Vec2::ZERO;
            let mut mean_offset = Vec2::ZERO;
            let mut mean_temporal = Vec2::ZERO;
            for &i in &point_indices {
                center += scan.scan.points[i].position();
                mean_offset += scan.offsets[i];
                mean_temporal += scan.temporal_offsets[i];
            }
            center = center / k;
            InstanceDescriptor {
                instance_id,
                corrected_center: center + mean_offset / k,
                predicted_next_center: center + mean_temporal / k,
                center,
                point_indices,
                feature: Vec::new(),
            }
        })
        .collect()
}
