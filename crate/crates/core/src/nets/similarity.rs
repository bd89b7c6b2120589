use ndarray::Array2;
use rand::Rng;

use super::mlp::{Mlp, MlpCache};
use crate::error::{shape_err, Result};
use crate::model::Vec2;
use crate::nn::{sigmoid, Dense, Mode, Module, Tensor};

/// Pairwise similarity `sigmoid(Q Kᵀ + R)` between two instance sets, where
/// `R_ij` encodes the center displacement `c_i − c_j` through a 2→2→1 MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityHead {
    pub query: Dense,
    pub key: Dense,
    pub center: Mlp,
}

#[derive(Clone, Debug)]
pub struct SimilarityCache {
    fa: Array2<f64>,
    fb: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    center: MlpCache,
    scores: Array2<f64>,
}

fn center_pairs(ca: &[Vec2], cb: &[Vec2]) -> Array2<f64> {
    let mut r = Array2::zeros((ca.len() * cb.len(), 2));
    for (i, a) in ca.iter().enumerate() {
        for (j, b) in cb.iter().enumerate() {
            let d = *a - *b;
            r[[i * cb.len() + j, 0]] = d.x;
            r[[i * cb.len() + j, 1]] = d.y;
        }
    }
    r
}

impl SimilarityHead {
    pub fn new<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            query: Dense::new(dim, dim, rng),
            key: Dense::new(dim, dim, rng),
            center: Mlp::new(2, 2, 1, false, rng),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            query: Dense::zeros(dim, dim),
            key: Dense::zeros(dim, dim),
            center: Mlp {
                first: Dense::zeros(2, 2),
                norm: None,
                second: Dense::zeros(2, 1),
            },
        }
    }

    fn check(&self, fa: &Array2<f64>, ca: &[Vec2], fb: &Array2<f64>, cb: &[Vec2]) -> Result<()> {
        if fa.nrows() != ca.len() || fb.nrows() != cb.len() {
            return Err(shape_err(
                "similarity_scores",
                "one center per feature row",
                format!("{}/{} and {}/{}", fa.nrows(), ca.len(), fb.nrows(), cb.len()),
            ));
        }
        Ok(())
    }

    /// `a × b` matrix of scores in `(0, 1)`; rows index `fa`, columns `fb`.
    pub fn similarity_scores(
        &self,
        fa: &Array2<f64>,
        ca: &[Vec2],
        fb: &Array2<f64>,
        cb: &[Vec2],
    ) -> Result<Array2<f64>> {
        self.check(fa, ca, fb, cb)?;
        let q = self.query.forward(fa)?;
        let k = self.key.forward(fb)?;
        let r = self.center.infer(&center_pairs(ca, cb))?;
        let logits = q.dot(&k.t()) + r.into_shape_with_order((ca.len(), cb.len())).unwrap();
        Ok(logits.mapv(sigmoid))
    }

    pub fn forward(
        &mut self,
        fa: &Array2<f64>,
        ca: &[Vec2],
        fb: &Array2<f64>,
        cb: &[Vec2],
    ) -> Result<(Array2<f64>, SimilarityCache)> {
        self.check(fa, ca, fb, cb)?;
        let q = self.query.forward(fa)?;
        let k = self.key.forward(fb)?;
        let (r, center) = self.center.forward(&center_pairs(ca, cb), Mode::Train)?;
        let logits = q.dot(&k.t()) + r.into_shape_with_order((ca.len(), cb.len())).unwrap();
        let scores = logits.mapv(sigmoid);
        Ok((
            scores.clone(),
            SimilarityCache {
                fa: fa.clone(),
                fb: fb.clone(),
                q,
                k,
                center,
                scores,
            },
        ))
    }

    /// Returns the gradients with respect to both feature matrices.
    pub fn backward(
        &mut self,
        cache: &SimilarityCache,
        dscores: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let s = &cache.scores;
        if dscores.dim() != s.dim() {
            return Err(shape_err(
                "similarity_backward",
                format!("{:?}", s.dim()),
                format!("{:?}", dscores.dim()),
            ));
        }
        let dz = dscores * &s.mapv(|a| a * (1.0 - a));
        let dq = dz.dot(&cache.k);
        let dk = dz.t().dot(&cache.q);
        let dr = dz.clone().into_shape_with_order((s.len(), 1)).unwrap();
        self.center.backward(&cache.center, &dr)?;
        let dfa = self.query.backward(&cache.fa, &dq)?;
        let dfb = self.key.backward(&cache.fb, &dk)?;
        Ok((dfa, dfb))
    }
}

/// `1 / (A + ε)` element-wise.
pub fn similarity_cost(scores: &Array2<f64>, epsilon: f64) -> Array2<f64> {
    scores.mapv(|a| 1.0 / (a + epsilon))
}

impl Module for SimilarityHead {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        self.query.visit(&format!("{prefix}.query"), f);
        self.key.visit(&format!("{prefix}.key"), f);
        self.center.visit(&format!("{prefix}.center"), f);
    }
}
