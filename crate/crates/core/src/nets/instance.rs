use std::ops::Range;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::attention::{BlockCache, Neighborhood, TransformerBlock};
use crate::error::{shape_err, Error, Result};
use crate::model::{InstanceDescriptor, SegmentedScan, Vec2};
use crate::nn::{Dense, Mode, Module, Tensor};

/// Fixed per-channel scaling of the raw `[x, y, rcs, v]` input.
pub const DEFAULT_INPUT_SCALE: [f64; 4] = [0.02, 0.02, 0.1, 0.2];

/// Member points of several instances laid out contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceBatch {
    pub points: Vec<Vec2>,
    pub features: Array2<f64>,
    pub groups: Vec<Range<usize>>,
}

impl InstanceBatch {
    pub fn new(scan: &SegmentedScan, members: &[&[usize]]) -> Self {
        let total: usize = members.iter().map(|m| m.len()).sum();
        let mut points = Vec::with_capacity(total);
        let mut features = Array2::zeros((total, 4));
        let mut groups = Vec::with_capacity(members.len());
        for m in members {
            let start = points.len();
            for &i in *m {
                let p = &scan.scan.points[i];
                features
                    .row_mut(points.len())
                    .iter_mut()
                    .zip(p.features())
                    .for_each(|(dst, v)| *dst = v);
                points.push(p.position());
            }
            groups.push(start..points.len());
        }
        Self {
            points,
            features,
            groups,
        }
    }

    pub fn from_instances(scan: &SegmentedScan, instances: &[InstanceDescriptor]) -> Self {
        let members: Vec<&[usize]> = instances.iter().map(|d| d.point_indices.as_slice()).collect();
        Self::new(scan, &members)
    }

    pub fn instances(&self) -> usize {
        self.groups.len()
    }
}

/// Two transformer blocks followed by softmax-weighted pooling over the
/// members of each instance.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentiveInstanceNet {
    pub input_scale: Array1<f64>,
    pub block1: TransformerBlock,
    pub block2: TransformerBlock,
    pub aggregation: Dense,
    pub n_local: usize,
}

#[derive(Clone, Debug)]
pub struct InstanceCache {
    nb: Neighborhood,
    groups: Vec<Range<usize>>,
    c1: BlockCache,
    c2: BlockCache,
    x2: Array2<f64>,
    weights: Array2<f64>,
}

/// Column-wise softmax over `rows` of `scores`, written into `out`.
fn group_softmax(scores: &Array2<f64>, rows: Range<usize>, out: &mut Array2<f64>) {
    for c in 0..scores.ncols() {
        let max = rows.clone().map(|r| scores[[r, c]]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for r in rows.clone() {
            let e = (scores[[r, c]] - max).exp();
            out[[r, c]] = e;
            sum += e;
        }
        for r in rows.clone() {
            out[[r, c]] /= sum;
        }
    }
}

fn pool(x2: &Array2<f64>, weights: &Array2<f64>, groups: &[Range<usize>]) -> Array2<f64> {
    let mut feats = Array2::zeros((groups.len(), x2.ncols()));
    for (g, rows) in groups.iter().enumerate() {
        let mut f = feats.row_mut(g);
        for r in rows.clone() {
            f += &(&weights.row(r) * &x2.row(r));
        }
    }
    feats
}

impl AttentiveInstanceNet {
    pub fn new<R: Rng + ?Sized>(d_in: usize, d1: usize, d2: usize, n_local: usize, rng: &mut R) -> Self {
        assert_eq!(d_in, DEFAULT_INPUT_SCALE.len());
        Self {
            input_scale: Array1::from(DEFAULT_INPUT_SCALE.to_vec()),
            block1: TransformerBlock::new(d_in, d1, rng),
            block2: TransformerBlock::new(d1, d2, rng),
            aggregation: Dense::new(d2, d2, rng),
            n_local,
        }
    }

    pub fn d_out(&self) -> usize {
        self.aggregation.out_dim()
    }

    fn check(&self, batch: &InstanceBatch) -> Result<()> {
        if batch.features.ncols() != self.input_scale.len() {
            return Err(shape_err("instance_net", self.input_scale.len(), batch.features.ncols()));
        }
        if batch.groups.iter().any(|g| g.is_empty()) {
            return Err(Error::Empty("instance_net instance"));
        }
        Ok(())
    }

    /// Softmax-weighted pooling of one instance's `m × D2` block output.
    pub fn attentive_aggregate(&self, x_out: &Array2<f64>) -> Result<Array1<f64>> {
        if x_out.nrows() == 0 {
            return Err(Error::Empty("attentive_aggregate"));
        }
        let scores = self.aggregation.forward(x_out)?;
        let mut weights = Array2::zeros(scores.dim());
        group_softmax(&scores, 0..x_out.nrows(), &mut weights);
        Ok((&weights * x_out).sum_axis(Axis(0)))
    }

    /// Inference: one `D2` feature row per instance.
    pub fn infer(&self, batch: &InstanceBatch) -> Result<Array2<f64>> {
        self.check(batch)?;
        if batch.instances() == 0 {
            return Ok(Array2::zeros((0, self.d_out())));
        }
        let nb = Neighborhood::within_groups(&batch.points, &batch.groups, self.n_local);
        let x0 = &batch.features * &self.input_scale;
        let x1 = self.block1.infer(&nb, &x0)?;
        let x2 = self.block2.infer(&nb, &x1)?;
        let scores = self.aggregation.forward(&x2)?;
        let mut weights = Array2::zeros(scores.dim());
        for g in &batch.groups {
            group_softmax(&scores, g.clone(), &mut weights);
        }
        Ok(pool(&x2, &weights, &batch.groups))
    }

    pub fn forward(&mut self, batch: &InstanceBatch, mode: Mode) -> Result<(Array2<f64>, InstanceCache)> {
        self.check(batch)?;
        let nb = Neighborhood::within_groups(&batch.points, &batch.groups, self.n_local);
        let x0 = &batch.features * &self.input_scale;
        let (x1, c1) = self.block1.forward(&nb, &x0, mode)?;
        let (x2, c2) = self.block2.forward(&nb, &x1, mode)?;
        let scores = self.aggregation.forward(&x2)?;
        let mut weights = Array2::zeros(scores.dim());
        for g in &batch.groups {
            group_softmax(&scores, g.clone(), &mut weights);
        }
        let feats = pool(&x2, &weights, &batch.groups);
        Ok((
            feats,
            InstanceCache {
                nb,
                groups: batch.groups.clone(),
                c1,
                c2,
                x2,
                weights,
            },
        ))
    }

    pub fn backward(&mut self, cache: &InstanceCache, dfeat: &Array2<f64>) -> Result<()> {
        if dfeat.dim() != (cache.groups.len(), self.d_out()) {
            return Err(shape_err(
                "instance_net_backward",
                format!("{}x{}", cache.groups.len(), self.d_out()),
                format!("{:?}", dfeat.dim()),
            ));
        }
        let x2 = &cache.x2;
        let w = &cache.weights;
        let mut dx2 = Array2::zeros(x2.dim());
        let mut dscores = Array2::zeros(x2.dim());
        for (g, rows) in cache.groups.iter().enumerate() {
            let df = dfeat.row(g);
            for c in 0..x2.ncols() {
                let mut dot = 0.0;
                for r in rows.clone() {
                    dot += w[[r, c]] * df[c] * x2[[r, c]];
                }
                for r in rows.clone() {
                    dx2[[r, c]] = df[c] * w[[r, c]];
                    dscores[[r, c]] = w[[r, c]] * (df[c] * x2[[r, c]] - dot);
                }
            }
        }
        dx2 += &self.aggregation.backward(x2, &dscores)?;
        let dx1 = self.block2.backward(&cache.nb, &cache.c2, &dx2)?;
        self.block1.backward(&cache.nb, &cache.c1, &dx1)?;
        Ok(())
    }

    /// Fills `feature` of every descriptor from the scan's raw point features.
    pub fn instance_features(&self, scan: &SegmentedScan, instances: &mut [InstanceDescriptor]) -> Result<()> {
        let batch = InstanceBatch::from_instances(scan, instances);
        let feats = self.infer(&batch)?;
        for (d, row) in instances.iter_mut().zip(feats.rows()) {
            d.feature = row.to_vec();
        }
        Ok(())
    }
}

impl Module for AttentiveInstanceNet {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        f(Tensor {
            name: format!("{prefix}.input_scale"),
            shape: vec![self.input_scale.len()],
            value: self.input_scale.as_slice_mut().unwrap(),
            grad: None,
        });
        self.block1.visit(&format!("{prefix}.block1"), f);
        self.block2.visit(&format!("{prefix}.block2"), f);
        self.aggregation.visit(&format!("{prefix}.aggregation"), f);
    }
}
