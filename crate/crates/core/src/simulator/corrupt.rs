use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::association::dbscan;
use crate::error::{Error, Result};
use crate::model::{AnnotatedScan, SegmentedScan, Semantic, Vec2};

/// Error model of the segmentation surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionRates {
    /// Per-point probability of inverting the moving/static label.
    pub flip: f64,
    /// Per-instance probability of splitting into two IDs.
    pub split: f64,
    /// Per-pair probability of merging two instances closer than `merge_radius`.
    pub merge: f64,
    pub merge_radius: f64,
    /// Std of Gaussian noise added to both offset fields of moving points, m.
    pub offset_noise: f64,
    /// Per-cluster probability of labelling a whole static cluster as one
    /// moving instance.
    pub ghost: f64,
    /// DBSCAN radius grouping static points into ghost candidates, m.
    pub ghost_radius: f64,
}

/// All rates zero; the radii only matter once their rate is set.
impl Default for CorruptionRates {
    fn default() -> Self {
        Self {
            flip: 0.0,
            split: 0.0,
            merge: 0.0,
            merge_radius: 3.0,
            offset_noise: 0.0,
            ghost: 0.0,
            ghost_radius: 2.0,
        }
    }
}

impl CorruptionRates {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("flip", self.flip), ("split", self.split), ("merge", self.merge), ("ghost", self.ghost)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} rate must lie in [0, 1], got {p}")));
            }
        }
        if !(self.merge_radius >= 0.0 && self.offset_noise >= 0.0)
            || !self.merge_radius.is_finite()
            || !self.offset_noise.is_finite()
        {
            return Err(Error::InvalidConfig("merge_radius and offset_noise must be finite and non-negative".into()));
        }
        if self.ghost > 0.0 && !(self.ghost_radius > 0.0 && self.ghost_radius.is_finite()) {
            return Err(Error::InvalidConfig("ghost_radius must be positive when ghosts are enabled".into()));
        }
        Ok(())
    }
}

fn instance_members(ids: &[u32]) -> BTreeMap<u32, Vec<usize>> {
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        if id > 0 {
            out.entry(id).or_default().push(i);
        }
    }
    out
}

/// Applies merge, split, ghosts, label flips and offset noise, in that order. Newly
/// created instances get IDs above every ID present in `gt`. Points flipped
/// to moving become single-point instances with zero offsets; points flipped
/// to static lose their ID and offsets.
pub fn corrupt_segmentation(gt: &SegmentedScan, rates: &CorruptionRates, seed: u64) -> Result<SegmentedScan> {
    rates.validate()?;
    gt.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = gt.clone();
    let mut next_id = gt.instance_ids.iter().copied().max().unwrap_or(0) + 1;
    let positions: Vec<Vec2> = gt.scan.points.iter().map(|p| p.position()).collect();
    let center = |members: &[usize]| members.iter().fold(Vec2::ZERO, |a, &i| a + positions[i]) / members.len() as f64;

    if rates.merge > 0.0 {
        let groups: Vec<(u32, Vec2)> = instance_members(&out.instance_ids)
            .into_iter()
            .map(|(id, m)| (id, center(&m)))
            .collect();
        let mut target: BTreeMap<u32, u32> = groups.iter().map(|&(id, _)| (id, id)).collect();
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let close = (groups[a].1 - groups[b].1).norm() <= rates.merge_radius;
                if close && rng.random::<f64>() < rates.merge {
                    let (ra, rb) = (root(&target, groups[a].0), root(&target, groups[b].0));
                    if ra != rb {
                        target.insert(ra.max(rb), ra.min(rb));
                    }
                }
            }
        }
        for id in out.instance_ids.iter_mut().filter(|id| **id > 0) {
            *id = root(&target, *id);
        }
    }

    if rates.split > 0.0 {
        for (_, mut members) in instance_members(&out.instance_ids) {
            if members.len() < 2 || rng.random::<f64>() >= rates.split {
                continue;
            }
            members.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x).then(a.cmp(&b)));
            for &i in &members[members.len() / 2..] {
                out.instance_ids[i] = next_id;
            }
            next_id += 1;
        }
    }

    if rates.ghost > 0.0 {
        let statics: Vec<usize> = (0..out.len()).filter(|&i| out.semantics[i] == Semantic::Static).collect();
        let pos: Vec<Vec2> = statics.iter().map(|&i| positions[i]).collect();
        let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, label) in dbscan(&pos, rates.ghost_radius, 1).into_iter().enumerate() {
            clusters.entry(label.expect("min_pts 1 leaves no noise")).or_default().push(statics[k]);
        }
        for members in clusters.values() {
            if rng.random::<f64>() >= rates.ghost {
                continue;
            }
            for &i in members {
                out.semantics[i] = Semantic::Moving;
                out.instance_ids[i] = next_id;
            }
            next_id += 1;
        }
    }

    if rates.flip > 0.0 {
        for i in 0..out.len() {
            if rng.random::<f64>() >= rates.flip {
                continue;
            }
            out.semantics[i] = out.semantics[i].flipped();
            out.offsets[i] = Vec2::ZERO;
            out.temporal_offsets[i] = Vec2::ZERO;
            out.instance_ids[i] = match out.semantics[i] {
                Semantic::Static => 0,
                Semantic::Moving => {
                    next_id += 1;
                    next_id - 1
                }
            };
        }
    }

    if rates.offset_noise > 0.0 {
        let normal = Normal::new(0.0, rates.offset_noise).expect("finite std");
        for i in 0..out.len() {
            if out.semantics[i] == Semantic::Moving {
                out.offsets[i] += Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
                out.temporal_offsets[i] += Vec2::new(normal.sample(&mut rng), normal.sample(&mut rng));
            }
        }
    }
    Ok(out)
}

fn root(target: &BTreeMap<u32, u32>, mut id: u32) -> u32 {
    while target[&id] != id {
        id = target[&id];
    }
    id
}

/// Corrupts the segmentation of every scan, keeping the ground-truth track IDs
/// for evaluation. Scan `k` uses a seed derived from `seed` and `k`.
pub fn corrupt_sequence(scans: &[AnnotatedScan], rates: &CorruptionRates, seed: u64) -> Result<Vec<AnnotatedScan>> {
    scans
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let scan_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
            Ok(AnnotatedScan {
                segmented: corrupt_segmentation(&s.segmented, rates, scan_seed)?,
                track_ids: s.track_ids.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RadarPoint, RadarScan};
    use crate::simulator::{generate_sequence, scenario_library};

    fn two_instances() -> SegmentedScan {
        let pts = vec![
            RadarPoint::new(0.0, 0.0, 1.0, 0.0),
            RadarPoint::new(1.0, 0.0, 1.0, 0.0),
            RadarPoint::new(2.0, 0.5, 1.0, 0.0),
            RadarPoint::new(10.0, 0.0, 1.0, 0.0),
            RadarPoint::new(11.0, 1.0, 1.0, 0.0),
            RadarPoint::new(30.0, 30.0, 0.0, 0.0),
        ];
        let mv = Semantic::Moving;
        SegmentedScan::new(
            RadarScan::new("s", 0, pts),
            vec![mv, mv, mv, mv, mv, Semantic::Static],
            vec![1, 1, 1, 2, 2, 0],
            {
                let o = Vec2::new(0.5, 0.5);
                vec![o, o, o, o, o, Vec2::ZERO]
            },
            vec![Vec2::ZERO; 6],
        )
        .unwrap()
    }

    #[test]
    fn zero_rates_are_identity() {
        let seq = generate_sequence(&scenario_library("crossing", 3).unwrap()).unwrap();
        let out = corrupt_sequence(&seq, &CorruptionRates::default(), 9).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn full_flip_inverts_every_label() {
        let gt = two_instances();
        let rates = CorruptionRates { flip: 1.0, ..Default::default() };
        let out = corrupt_segmentation(&gt, &rates, 1).unwrap();
        for i in 0..gt.len() {
            assert_eq!(out.semantics[i], gt.semantics[i].flipped());
        }
        assert_eq!(&out.instance_ids[..5], &[0; 5]);
        assert!(out.instance_ids[5] > 2);
        out.validate().unwrap();
    }

    #[test]
    fn full_split_refines_the_partition() {
        let gt = two_instances();
        let rates = CorruptionRates { split: 1.0, ..Default::default() };
        let out = corrupt_segmentation(&gt, &rates, 5).unwrap();
        let groups = instance_members(&out.instance_ids);
        assert_eq!(groups.len(), 4);
        for members in groups.values() {
            let origin = gt.instance_ids[members[0]];
            assert!(members.iter().all(|&i| gt.instance_ids[i] == origin));
        }
    }

    #[test]
    fn close_instances_merge() {
        let gt = two_instances();
        let rates = CorruptionRates { merge: 1.0, merge_radius: 15.0, ..Default::default() };
        let out = corrupt_segmentation(&gt, &rates, 2).unwrap();
        assert_eq!(&out.instance_ids, &[1, 1, 1, 1, 1, 0]);
        let far = CorruptionRates { merge: 1.0, merge_radius: 5.0, ..Default::default() };
        assert_eq!(corrupt_segmentation(&gt, &far, 2).unwrap(), gt);
    }

    #[test]
    fn offset_noise_touches_only_moving_points() {
        let gt = two_instances();
        let rates = CorruptionRates { offset_noise: 0.3, ..Default::default() };
        let out = corrupt_segmentation(&gt, &rates, 2).unwrap();
        assert_eq!(out.offsets[5], Vec2::ZERO);
        assert!((0..5).all(|i| out.offsets[i] != gt.offsets[i]));
        assert_eq!(out.instance_ids, gt.instance_ids);
    }

    #[test]
    fn ghosts_turn_static_clusters_into_instances() {
        let mut gt = two_instances();
        gt.scan.points.push(RadarPoint::new(31.0, 30.0, 0.0, 0.0));
        gt.scan.points.push(RadarPoint::new(-40.0, 0.0, 0.0, 0.0));
        gt.semantics.extend([Semantic::Static; 2]);
        gt.instance_ids.extend([0, 0]);
        gt.offsets.extend([Vec2::ZERO; 2]);
        gt.temporal_offsets.extend([Vec2::ZERO; 2]);
        let rates = CorruptionRates { ghost: 1.0, ghost_radius: 2.0, ..Default::default() };
        let out = corrupt_segmentation(&gt, &rates, 3).unwrap();
        assert_eq!(&out.instance_ids[..5], &gt.instance_ids[..5]);
        assert_eq!(out.instance_ids[5], out.instance_ids[6]);
        assert!(out.instance_ids[5] > 2 && out.instance_ids[7] > 2);
        assert_ne!(out.instance_ids[5], out.instance_ids[7]);
        assert!(out.semantics.iter().all(|&s| s == Semantic::Moving));
        out.validate().unwrap();
    }

    #[test]
    fn bad_rates_are_rejected() {
        let rates = CorruptionRates { flip: 1.5, ..Default::default() };
        assert!(corrupt_segmentation(&two_instances(), &rates, 0).is_err());
    }
}
