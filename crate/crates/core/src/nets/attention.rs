use std::ops::Range;

use ndarray::{Array2, Array3};
use rand::Rng;

use super::mlp::{Mlp, MlpCache};
use crate::error::{shape_err, Result};
use crate::model::Vec2;
use crate::nn::{knn_indices, Dense, Mode, Module, Tensor};

/// k-nearest-neighbour structure of a point set, restricted to groups
/// (instances). `relative` holds `p_i − p_j` for every `(i, slot)` pair,
/// flattened row-major to `(m·k) × 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub indices: Array2<usize>,
    pub relative: Array2<f64>,
}

impl Neighborhood {
    pub fn new(points: &[Vec2], k: usize) -> Self {
        Self::within_groups(points, &[0..points.len()], k)
    }

    /// `groups` must be disjoint contiguous ranges covering `points`.
    pub fn within_groups(points: &[Vec2], groups: &[Range<usize>], k: usize) -> Self {
        let m = points.len();
        let mut indices = Array2::zeros((m, k));
        for g in groups {
            let local = knn_indices(&points[g.clone()], k);
            for (li, row) in local.rows().into_iter().enumerate() {
                for (slot, &j) in row.iter().enumerate() {
                    indices[[g.start + li, slot]] = g.start + j;
                }
            }
        }
        let mut relative = Array2::zeros((m * k, 2));
        for i in 0..m {
            for slot in 0..k {
                let r = points[i] - points[indices[[i, slot]]];
                relative[[i * k + slot, 0]] = r.x;
                relative[[i * k + slot, 1]] = r.y;
            }
        }
        Self { indices, relative }
    }

    pub fn points(&self) -> usize {
        self.indices.nrows()
    }

    pub fn k(&self) -> usize {
        self.indices.ncols()
    }
}

/// Channel-wise attention weights and output of one vector-attention layer.
///
/// `A_ij = softmax_j(q_i − k_j + r_ij)` per channel, `out_i = Σ_j A_ij ⊙ (v_j + r_ij)`.
fn attention_core(
    nb: &Neighborhood,
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    r: &Array2<f64>,
) -> (Array2<f64>, Array3<f64>) {
    let (m, slots) = nb.indices.dim();
    let d = q.ncols();
    let mut weights = Array3::zeros((m, slots, d));
    let mut out = Array2::zeros((m, d));
    let mut logits = vec![0.0; slots];
    for i in 0..m {
        for c in 0..d {
            let mut max = f64::NEG_INFINITY;
            for (s, z) in logits.iter_mut().enumerate() {
                let j = nb.indices[[i, s]];
                *z = q[[i, c]] - k[[j, c]] + r[[i * slots + s, c]];
                max = max.max(*z);
            }
            let mut sum = 0.0;
            for z in logits.iter_mut() {
                *z = (*z - max).exp();
                sum += *z;
            }
            let mut acc = 0.0;
            for (s, z) in logits.iter().enumerate() {
                let a = z / sum;
                weights[[i, s, c]] = a;
                let j = nb.indices[[i, s]];
                acc += a * (v[[j, c]] + r[[i * slots + s, c]]);
            }
            out[[i, c]] = acc;
        }
    }
    (out, weights)
}

/// Residual transformer block: `Y = W_out · attn(W_l X) + W_skip X`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerBlock {
    pub input: Dense,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    /// `dense(2→2) → BN → ReLU → dense(2→D)` over relative positions.
    pub position: Mlp,
    pub output: Dense,
    pub shortcut: Dense,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    pos: MlpCache,
    q: Array2<f64>,
    v: Array2<f64>,
    r: Array2<f64>,
    weights: Array3<f64>,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    x: Array2<f64>,
    xl: Array2<f64>,
    attention: AttentionCache,
    t: Array2<f64>,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Self {
            input: Dense::new(d_in, d_out, rng),
            query: Dense::new(d_out, d_out, rng),
            key: Dense::new(d_out, d_out, rng),
            value: Dense::new(d_out, d_out, rng),
            position: Mlp::new(2, 2, d_out, true, rng),
            output: Dense::new(d_out, d_out, rng),
            shortcut: Dense::new(d_in, d_out, rng),
        }
    }

    pub fn d_out(&self) -> usize {
        self.input.out_dim()
    }

    fn check(&self, nb: &Neighborhood, xl: &Array2<f64>) -> Result<()> {
        if xl.nrows() != nb.points() || xl.ncols() != self.d_out() {
            return Err(shape_err(
                "vector_attention",
                format!("{}x{}", nb.points(), self.d_out()),
                format!("{}x{}", xl.nrows(), xl.ncols()),
            ));
        }
        Ok(())
    }

    /// The attention layer alone, in inference mode, with neighbourhoods over
    /// all of `points`. `xl` is the already-projected `m × D` feature matrix.
    pub fn vector_attention(&self, points: &[Vec2], xl: &Array2<f64>, k: usize) -> Result<Array2<f64>> {
        let nb = Neighborhood::new(points, k);
        Ok(self.attention_weights(&nb, xl)?.0)
    }

    /// Inference-mode attention output and the `m × k × D` weights.
    pub fn attention_weights(
        &self,
        nb: &Neighborhood,
        xl: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array3<f64>)> {
        self.check(nb, xl)?;
        let q = self.query.forward(xl)?;
        let k = self.key.forward(xl)?;
        let v = self.value.forward(xl)?;
        let r = self.position.infer(&nb.relative)?;
        Ok(attention_core(nb, &q, &k, &v, &r))
    }

    fn attend(
        &mut self,
        nb: &Neighborhood,
        xl: &Array2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, AttentionCache)> {
        self.check(nb, xl)?;
        let q = self.query.forward(xl)?;
        let k = self.key.forward(xl)?;
        let v = self.value.forward(xl)?;
        let (r, pos) = self.position.forward(&nb.relative, mode)?;
        let (out, weights) = attention_core(nb, &q, &k, &v, &r);
        Ok((
            out,
            AttentionCache {
                pos,
                q,
                v,
                r,
                weights,
            },
        ))
    }

    /// Returns `dXl`.
    fn attend_backward(
        &mut self,
        nb: &Neighborhood,
        xl: &Array2<f64>,
        cache: &AttentionCache,
        dout: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let (m, slots) = nb.indices.dim();
        let d = cache.q.ncols();
        let mut dq = Array2::zeros((m, d));
        let mut dk = Array2::zeros((m, d));
        let mut dv = Array2::zeros((m, d));
        let mut dr = Array2::zeros((m * slots, d));
        let mut da = vec![0.0; slots];
        for i in 0..m {
            for c in 0..d {
                let g = dout[[i, c]];
                let mut dot = 0.0;
                for (s, da_s) in da.iter_mut().enumerate() {
                    let j = nb.indices[[i, s]];
                    *da_s = g * (cache.v[[j, c]] + cache.r[[i * slots + s, c]]);
                    dot += cache.weights[[i, s, c]] * *da_s;
                }
                for (s, da_s) in da.iter().enumerate() {
                    let j = nb.indices[[i, s]];
                    let a = cache.weights[[i, s, c]];
                    let du = g * a;
                    let dz = a * (da_s - dot);
                    dq[[i, c]] += dz;
                    dk[[j, c]] -= dz;
                    dv[[j, c]] += du;
                    dr[[i * slots + s, c]] = dz + du;
                }
            }
        }
        self.position.backward(&cache.pos, &dr)?;
        let mut dxl = self.query.backward(xl, &dq)?;
        dxl += &self.key.backward(xl, &dk)?;
        dxl += &self.value.backward(xl, &dv)?;
        Ok(dxl)
    }

    pub fn forward(
        &mut self,
        nb: &Neighborhood,
        x: &Array2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, BlockCache)> {
        let xl = self.input.forward(x)?;
        let (t, attention) = self.attend(nb, &xl, mode)?;
        let y = self.output.forward(&t)? + self.shortcut.forward(x)?;
        Ok((
            y,
            BlockCache {
                x: x.clone(),
                xl,
                attention,
                t,
            },
        ))
    }

    pub fn infer(&self, nb: &Neighborhood, x: &Array2<f64>) -> Result<Array2<f64>> {
        let xl = self.input.forward(x)?;
        let (t, _) = self.attention_weights(nb, &xl)?;
        Ok(self.output.forward(&t)? + self.shortcut.forward(x)?)
    }

    /// Returns `dX`.
    pub fn backward(
        &mut self,
        nb: &Neighborhood,
        cache: &BlockCache,
        dy: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        let dt = self.output.backward(&cache.t, dy)?;
        let mut dx = self.shortcut.backward(&cache.x, dy)?;
        let dxl = self.attend_backward(nb, &cache.xl, &cache.attention, &dt)?;
        dx += &self.input.backward(&cache.x, &dxl)?;
        Ok(dx)
    }
}

impl Module for TransformerBlock {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        self.input.visit(&format!("{prefix}.input"), f);
        self.query.visit(&format!("{prefix}.query"), f);
        self.key.visit(&format!("{prefix}.key"), f);
        self.value.visit(&format!("{prefix}.value"), f);
        self.position.visit(&format!("{prefix}.position"), f);
        self.output.visit(&format!("{prefix}.output"), f);
        self.shortcut.visit(&format!("{prefix}.shortcut"), f);
    }
}
