//! Point-wise segmentation and tracking scores: IoU of the moving class,
//! S_cls, S_assoc, LSTQ and ID switches.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::model::{AnnotatedScan, Semantic};

/// Per-point semantics and track IDs (0 = none) of one scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScanLabels {
    pub semantics: Vec<Semantic>,
    pub track_ids: Vec<u32>,
}

impl ScanLabels {
    pub fn new(semantics: Vec<Semantic>, track_ids: Vec<u32>) -> Result<Self> {
        if semantics.len() != track_ids.len() {
            return Err(shape_err("scan_labels", semantics.len(), track_ids.len()));
        }
        Ok(Self { semantics, track_ids })
    }

    pub fn len(&self) -> usize {
        self.semantics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.semantics.is_empty()
    }
}

/// Labels of one sequence, scan by scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceLabels {
    pub scans: Vec<ScanLabels>,
}

impl SequenceLabels {
    pub fn from_annotated(scans: &[AnnotatedScan]) -> Self {
        Self {
            scans: scans
                .iter()
                .map(|s| ScanLabels {
                    semantics: s.segmented.semantics.clone(),
                    track_ids: s.track_ids.clone(),
                })
                .collect(),
        }
    }

    /// Semantics taken from `scans`, track IDs from `ids` (one vector per scan).
    pub fn with_ids(scans: &[AnnotatedScan], ids: &[Vec<u32>]) -> Result<Self> {
        if scans.len() != ids.len() {
            return Err(shape_err("sequence_labels", scans.len(), ids.len()));
        }
        let scans = scans
            .iter()
            .zip(ids)
            .map(|(s, i)| ScanLabels::new(s.segmented.semantics.clone(), i.clone()))
            .collect::<Result<_>>()?;
        Ok(Self { scans })
    }
}

/// One aligned point: `(sequence, scan, pred, gt)`.
struct Point<'a> {
    seq: usize,
    scan: usize,
    pred: (&'a Semantic, u32),
    gt: (&'a Semantic, u32),
}

fn aligned<'a>(pred: &'a [SequenceLabels], gt: &'a [SequenceLabels]) -> Result<Vec<Point<'a>>> {
    if pred.len() != gt.len() {
        return Err(shape_err("metrics sequences", gt.len(), pred.len()));
    }
    let mut out = Vec::new();
    for (seq, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.scans.len() != g.scans.len() {
            return Err(shape_err("metrics scans", g.scans.len(), p.scans.len()));
        }
        for (scan, (ps, gs)) in p.scans.iter().zip(&g.scans).enumerate() {
            if ps.len() != gs.len() || ps.track_ids.len() != ps.len() || gs.track_ids.len() != gs.len() {
                return Err(shape_err("metrics points", gs.len(), ps.len()));
            }
            for i in 0..ps.len() {
                out.push(Point {
                    seq,
                    scan,
                    pred: (&ps.semantics[i], ps.track_ids[i]),
                    gt: (&gs.semantics[i], gs.track_ids[i]),
                });
            }
        }
    }
    Ok(out)
}

fn class_iou(points: &[Point<'_>], class: Semantic) -> Option<f64> {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for p in points {
        match (*p.pred.0 == class, *p.gt.0 == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let union = tp + fp + fn_;
    (union > 0).then(|| tp as f64 / union as f64)
}

/// `TP / (TP + FP + FN)` of the moving class over all points; 1 when neither
/// side labels anything moving.
pub fn iou_mov(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<f64> {
    Ok(class_iou(&aligned(pred, gt)?, Semantic::Moving).unwrap_or(1.0))
}

/// Mean per-class IoU over {moving, static}; classes absent from both sides
/// are left out of the mean.
pub fn s_cls(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<f64> {
    let points = aligned(pred, gt)?;
    let ious: Vec<f64> = [Semantic::Moving, Semantic::Static]
        .into_iter()
        .filter_map(|c| class_iou(&points, c))
        .collect();
    if ious.is_empty() {
        return Ok(1.0);
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// `(1/|T|) Σ_t (1/|t|) Σ_s |s∩t| · |s∩t| / |s∪t|` over ground-truth tracks `t`
/// and predicted tracks `s`, with tracks keyed per sequence. With no
/// ground-truth track the score is 1 if nothing is predicted either, else 0.
pub fn s_assoc(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<f64> {
    let points = aligned(pred, gt)?;
    let mut pred_size: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    let mut gt_size: BTreeMap<(usize, u32), usize> = BTreeMap::new();
    let mut inter: BTreeMap<((usize, u32), (usize, u32)), usize> = BTreeMap::new();
    for p in &points {
        let s = (p.pred.1 > 0).then_some((p.seq, p.pred.1));
        let t = (p.gt.1 > 0).then_some((p.seq, p.gt.1));
        if let Some(s) = s {
            *pred_size.entry(s).or_default() += 1;
        }
        if let Some(t) = t {
            *gt_size.entry(t).or_default() += 1;
        }
        if let (Some(s), Some(t)) = (s, t) {
            *inter.entry((t, s)).or_default() += 1;
        }
    }
    if gt_size.is_empty() {
        return Ok(if pred_size.is_empty() { 1.0 } else { 0.0 });
    }
    let mut per_track: BTreeMap<(usize, u32), f64> = BTreeMap::new();
    for (&(t, s), &n) in &inter {
        let union = gt_size[&t] + pred_size[&s] - n;
        *per_track.entry(t).or_default() += n as f64 * n as f64 / union as f64;
    }
    let total: f64 = gt_size
        .iter()
        .map(|(t, &size)| per_track.get(t).copied().unwrap_or(0.0) / size as f64)
        .sum();
    Ok(total / gt_size.len() as f64)
}

/// `sqrt(S_cls · S_assoc)`.
pub fn lstq_from(s_cls: f64, s_assoc: f64) -> f64 {
    (s_cls * s_assoc).sqrt()
}

pub fn lstq(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<f64> {
    Ok(lstq_from(s_cls(pred, gt)?, s_assoc(pred, gt)?))
}

/// Number of times a ground-truth track changes its predicted identity. Per
/// scan the identity is the most frequent non-zero predicted ID among the
/// track's points (ties to the smaller ID); scans where it is missed are
/// skipped.
pub fn num_switches(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<usize> {
    let points = aligned(pred, gt)?;
    let mut votes: BTreeMap<((usize, u32), usize), BTreeMap<u32, usize>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.gt.1 > 0 && p.pred.1 > 0) {
        *votes
            .entry(((p.seq, p.gt.1), p.scan))
            .or_default()
            .entry(p.pred.1)
            .or_default() += 1;
    }
    let mut last: BTreeMap<(usize, u32), u32> = BTreeMap::new();
    let mut switches = 0;
    for ((track, _), counts) in votes {
        let id = counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| id)
            .expect("non-empty vote");
        if let Some(prev) = last.insert(track, id) {
            switches += usize::from(prev != id);
        }
    }
    Ok(switches)
}

fn distinct_tracks(labels: &[SequenceLabels]) -> usize {
    let mut set = BTreeSet::new();
    for (seq, l) in labels.iter().enumerate() {
        for s in &l.scans {
            set.extend(s.track_ids.iter().filter(|&&id| id > 0).map(|&id| (seq, id)));
        }
    }
    set.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub lstq: f64,
    pub s_assoc: f64,
    pub s_cls: f64,
    pub iou_mov: f64,
    pub num_switches: usize,
    pub num_tracks_pred: usize,
    pub num_tracks_gt: usize,
}

pub fn evaluate(pred: &[SequenceLabels], gt: &[SequenceLabels]) -> Result<MetricReport> {
    let s_cls = s_cls(pred, gt)?;
    let s_assoc = s_assoc(pred, gt)?;
    Ok(MetricReport {
        lstq: lstq_from(s_cls, s_assoc),
        s_assoc,
        s_cls,
        iou_mov: iou_mov(pred, gt)?,
        num_switches: num_switches(pred, gt)?,
        num_tracks_pred: distinct_tracks(pred),
        num_tracks_gt: distinct_tracks(gt),
    })
}
