use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instance::{AttentiveInstanceNet, InstanceBatch};
use super::offset::{offset_input, OffsetHead};
use super::similarity::SimilarityHead;
use super::TrackerNets;
use crate::association::dbscan;
use crate::error::{Error, Result};
use crate::model::{extract_moving_instances, AnnotatedScan, Semantic, Vec2};
use crate::nn::{bce_loss, offset_l1_loss_masked, zero_grad, AdamW, Mode, Module, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// Scan pairs per step for the similarity, scans per step for the offsets.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Static clusters added per scan as negative instances.
    pub augment_static: usize,
    /// DBSCAN radius grouping static points into augmentation instances.
    pub augment_radius: f64,
    /// Radius of a random displacement applied to every source center each
    /// time a pair is drawn, so the head cannot separate pairs by distance
    /// alone inside the gating band.
    pub center_jitter: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 0.01,
            augment_static: 4,
            augment_radius: 2.0,
            center_jitter: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean loss of the first and last `window` steps.
    pub fn head_tail(&self, window: usize) -> (f64, f64) {
        let w = window.min(self.losses.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len().max(1) as f64;
        (
            mean(&self.losses[..w.min(self.losses.len())]),
            mean(&self.losses[self.losses.len().saturating_sub(w)..]),
        )
    }
}

/// One training example for the similarity head: instances of scan `t`
/// (rows) against instances of scan `t+1` (columns).
#[derive(Clone, Debug)]
pub struct PairSample {
    pub first: InstanceBatch,
    pub first_centers: Vec<Vec2>,
    pub second: InstanceBatch,
    pub second_centers: Vec<Vec2>,
    /// 1 where row and column share a ground-truth track.
    pub target: Array2<f64>,
}

impl PairSample {
    pub fn positives(&self) -> usize {
        self.target.iter().filter(|&&v| v > 0.5).count()
    }
}

/// The instance network and similarity head as one trainable unit.
pub struct SimilarityModel<'a> {
    pub instance: &'a mut AttentiveInstanceNet,
    pub similarity: &'a mut SimilarityHead,
}

impl Module for SimilarityModel<'_> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        let p = |n: &str| if prefix.is_empty() { n.to_string() } else { format!("{prefix}.{n}") };
        self.instance.visit(&p("instance"), f);
        self.similarity.visit(&p("similarity"), f);
    }
}

impl SimilarityModel<'_> {
    /// Forward + backward of the masked BCE on one pair; gradients are scaled
    /// by `weight` and accumulated. Returns the unscaled loss.
    pub fn accumulate(&mut self, sample: &PairSample, weight: f64) -> Result<f64> {
        let (fa, ca) = self.instance.forward(&sample.first, Mode::Train)?;
        let (fb, cb) = self.instance.forward(&sample.second, Mode::Train)?;
        let (scores, sc) =
            self.similarity
                .forward(&fa, &sample.first_centers, &fb, &sample.second_centers)?;
        let mask = Array2::from_elem(scores.dim(), true);
        let (loss, dscores) = bce_loss(&scores, &sample.target, &mask)?;
        let (dfa, dfb) = self.similarity.backward(&sc, &(dscores * weight))?;
        self.instance.backward(&ca, &dfa)?;
        self.instance.backward(&cb, &dfb)?;
        Ok(loss)
    }

    /// Inference-mode scores for one pair.
    pub fn scores(&self, sample: &PairSample) -> Result<Array2<f64>> {
        let fa = self.instance.infer(&sample.first)?;
        let fb = self.instance.infer(&sample.second)?;
        self.similarity
            .similarity_scores(&fa, &sample.first_centers, &fb, &sample.second_centers)
    }
}

struct Candidate {
    members: Vec<usize>,
    center: Vec2,
    track: u32,
}

fn majority_track(scan: &AnnotatedScan, members: &[usize]) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &i in members {
        *counts.entry(scan.track_ids[i]).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|&(id, _)| id > 0)
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(id, _)| id)
        .unwrap_or(0)
}

fn candidates<R: Rng>(scan: &AnnotatedScan, as_source: bool, cfg: &TrainConfig, rng: &mut R) -> Vec<Candidate> {
    let seg = &scan.segmented;
    let mut out: Vec<Candidate> = extract_moving_instances(seg)
        .into_iter()
        .map(|d| Candidate {
            track: majority_track(scan, &d.point_indices),
            center: if as_source {
                d.predicted_next_center
            } else {
                d.corrected_center
            },
            members: d.point_indices,
        })
        .collect();
    if cfg.augment_static > 0 {
        let statics: Vec<usize> = (0..seg.len())
            .filter(|&i| seg.semantics[i] == Semantic::Static)
            .collect();
        let pos: Vec<Vec2> = statics.iter().map(|&i| seg.scan.points[i].position()).collect();
        let labels = dbscan(&pos, cfg.augment_radius, 1);
        let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, l) in labels.iter().enumerate() {
            if let Some(l) = l {
                clusters.entry(*l).or_default().push(statics[k]);
            }
        }
        let mut clusters: Vec<Vec<usize>> = clusters.into_values().collect();
        clusters.shuffle(rng);
        for members in clusters.into_iter().take(cfg.augment_static) {
            let center = members
                .iter()
                .fold(Vec2::ZERO, |acc, &i| acc + seg.scan.points[i].position())
                / members.len() as f64;
            out.push(Candidate {
                members,
                center,
                track: 0,
            });
        }
    }
    out
}

/// Builds consecutive-scan training pairs from annotated sequences whose
/// `track_ids` are ground truth.
pub fn similarity_pairs(sequences: &[Vec<AnnotatedScan>], cfg: &TrainConfig) -> Vec<PairSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5a5a);
    let mut out = Vec::new();
    for seq in sequences {
        for w in seq.windows(2) {
            let a = candidates(&w[0], true, cfg, &mut rng);
            let b = candidates(&w[1], false, cfg, &mut rng);
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let target = Array2::from_shape_fn((a.len(), b.len()), |(i, j)| {
                if a[i].track > 0 && a[i].track == b[j].track {
                    1.0
                } else {
                    0.0
                }
            });
            let members_a: Vec<&[usize]> = a.iter().map(|c| c.members.as_slice()).collect();
            let members_b: Vec<&[usize]> = b.iter().map(|c| c.members.as_slice()).collect();
            out.push(PairSample {
                first: InstanceBatch::new(&w[0].segmented, &members_a),
                first_centers: a.iter().map(|c| c.center).collect(),
                second: InstanceBatch::new(&w[1].segmented, &members_b),
                second_centers: b.iter().map(|c| c.center).collect(),
                target,
            });
        }
    }
    out
}

/// Trains the instance network and similarity head with AdamW on batches of
/// scan pairs, supervising every row of the first scan with BCE.
pub fn train_similarity(nets: &mut TrackerNets, pairs: &[PairSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if !pairs.iter().any(|p| p.positives() > 0) {
        return Err(Error::NoPositivePairs);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut model = SimilarityModel {
        instance: &mut nets.instance,
        similarity: &mut nets.similarity,
    };
    let batch = cfg.batch_size.max(1);
    let mut report = TrainReport::default();
    for _ in 0..cfg.steps {
        zero_grad(&mut model);
        let mut total = 0.0;
        for _ in 0..batch {
            let sample = &pairs[rng.random_range(0..pairs.len())];
            total += if cfg.center_jitter > 0.0 {
                let mut jittered = sample.clone();
                for c in &mut jittered.first_centers {
                    let r = cfg.center_jitter * rng.random::<f64>().sqrt();
                    let (sin, cos) = (rng.random::<f64>() * std::f64::consts::TAU).sin_cos();
                    *c += Vec2::new(r * cos, r * sin);
                }
                model.accumulate(&jittered, 1.0 / batch as f64)?
            } else {
                model.accumulate(sample, 1.0 / batch as f64)?
            };
        }
        opt.step(&mut model);
        report.losses.push(total / batch as f64);
    }
    Ok(report)
}

/// Per-scan regression targets for the offset heads, restricted to moving
/// points. Temporal targets are masked for tracks that never reappear.
#[derive(Clone, Debug)]
pub struct OffsetSample {
    pub input: Array2<f64>,
    pub points: Array2<f64>,
    pub centers: Array2<f64>,
    pub next_centers: Array2<f64>,
    pub temporal_mask: Vec<bool>,
}

pub fn offset_samples(sequences: &[Vec<AnnotatedScan>]) -> Vec<OffsetSample> {
    let mut out = Vec::new();
    for seq in sequences {
        // tracks that still appear at or after each scan index
        let mut later: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); seq.len() + 1];
        for k in (0..seq.len()).rev() {
            let mut s = later[k + 1].clone();
            s.extend(seq[k].track_ids.iter().copied().filter(|&id| id > 0));
            later[k] = s;
        }
        for (k, scan) in seq.iter().enumerate() {
            let seg = &scan.segmented;
            let idx: Vec<usize> = (0..seg.len())
                .filter(|&i| seg.semantics[i] == Semantic::Moving)
                .collect();
            if idx.is_empty() {
                continue;
            }
            let n = idx.len();
            let mut points = Array2::zeros((n, 2));
            let mut centers = Array2::zeros((n, 2));
            let mut next_centers = Array2::zeros((n, 2));
            let mut temporal_mask = Vec::with_capacity(n);
            for (row, &i) in idx.iter().enumerate() {
                let p = seg.scan.points[i].position();
                let c = p + seg.offsets[i];
                let cn = p + seg.temporal_offsets[i];
                points[[row, 0]] = p.x;
                points[[row, 1]] = p.y;
                centers[[row, 0]] = c.x;
                centers[[row, 1]] = c.y;
                next_centers[[row, 0]] = cn.x;
                next_centers[[row, 1]] = cn.y;
                temporal_mask.push(later[k + 1].contains(&scan.track_ids[i]));
            }
            out.push(OffsetSample {
                input: offset_input(seg, &idx),
                points,
                centers,
                next_centers,
                temporal_mask,
            });
        }
    }
    out
}

/// Fits both offset heads with the L1 offset loss on ground-truth sequences.
pub fn train_offsets(head: &mut OffsetHead, samples: &[OffsetSample], cfg: &TrainConfig) -> Result<TrainReport> {
    if samples.is_empty() {
        return Err(Error::Empty("train_offsets samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = AdamW::new(cfg.lr).with_weight_decay(cfg.weight_decay);
    let mut report = TrainReport::default();
    let batch = cfg.batch_size.max(1).min(samples.len());
    for _ in 0..cfg.steps {
        zero_grad(head);
        let picks: Vec<&OffsetSample> = if batch == samples.len() {
            samples.iter().collect()
        } else {
            (0..batch).map(|_| &samples[rng.random_range(0..samples.len())]).collect()
        };
        let stack = |f: &dyn Fn(&OffsetSample) -> &Array2<f64>| {
            let views: Vec<_> = picks.iter().map(|s| f(s).view()).collect();
            ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths")
        };
        let input = stack(&|s| &s.input);
        let points = stack(&|s| &s.points);
        let centers = stack(&|s| &s.centers);
        let next = stack(&|s| &s.next_centers);
        let all = vec![true; input.nrows()];
        let tmask: Vec<bool> = picks.iter().flat_map(|s| s.temporal_mask.iter().copied()).collect();

        let ((o, ot), cache) = head.forward(&input, Mode::Train)?;
        let (l1, d_o) = offset_l1_loss_masked(&o, &centers, &points, &all)?;
        let (l2, d_ot) = if tmask.iter().any(|&m| m) {
            offset_l1_loss_masked(&ot, &next, &points, &tmask)?
        } else {
            (0.0, Array2::zeros(ot.dim()))
        };
        head.backward(&cache, &d_o, &d_ot)?;
        opt.step(head);
        report.losses.push(l1 + l2);
    }
    Ok(report)
}

/// Mean absolute coordinate error of both heads on `samples`, in meters:
/// `(standard, temporal)`. Temporal errors skip masked rows.
pub fn offset_mae(head: &OffsetHead, samples: &[OffsetSample]) -> Result<(f64, f64)> {
    let (mut e_o, mut n_o, mut e_t, mut n_t) = (0.0, 0usize, 0.0, 0usize);
    for s in samples {
        let (o, ot) = head.infer(&s.input)?;
        for r in 0..o.nrows() {
            for c in 0..2 {
                e_o += (o[[r, c]] - (s.centers[[r, c]] - s.points[[r, c]])).abs();
                if s.temporal_mask[r] {
                    e_t += (ot[[r, c]] - (s.next_centers[[r, c]] - s.points[[r, c]])).abs();
                }
            }
            n_o += 2;
            n_t += 2 * usize::from(s.temporal_mask[r]);
        }
    }
    Ok((e_o / n_o.max(1) as f64, e_t / n_t.max(1) as f64))
}
