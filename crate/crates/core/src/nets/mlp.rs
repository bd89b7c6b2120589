use ndarray::Array2;
use rand::Rng;

use crate::error::Result;
use crate::nn::{relu, relu_backward, BatchNorm1d, BnCache, Dense, Mode, Module, Tensor};

/// `dense → [BN] → ReLU → dense`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub first: Dense,
    pub norm: Option<BatchNorm1d>,
    pub second: Dense,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    x: Array2<f64>,
    bn: Option<BnCache>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        batch_norm: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            first: Dense::new(input, hidden, rng),
            norm: batch_norm.then(|| BatchNorm1d::new(hidden)),
            second: Dense::new(hidden, output, rng),
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, MlpCache)> {
        let h = self.first.forward(x)?;
        let (pre, bn) = match &mut self.norm {
            Some(norm) => {
                let (y, c) = norm.forward(&h, mode)?;
                (y, Some(c))
            }
            None => (h, None),
        };
        let act = relu(&pre);
        let y = self.second.forward(&act)?;
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                bn,
                pre,
                act,
            },
        ))
    }

    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut h = self.first.forward(x)?;
        if let Some(norm) = &self.norm {
            h = norm.infer(&h)?;
        }
        self.second.forward(&relu(&h))
    }

    /// Inputs of the ReLU for `x`. Train mode normalizes with batch
    /// statistics and leaves the running averages untouched.
    pub fn preactivations(&self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        let h = self.first.forward(x)?;
        match &self.norm {
            Some(norm) if mode == Mode::Train => Ok(norm.clone().forward(&h, mode)?.0),
            Some(norm) => norm.infer(&h),
            None => Ok(h),
        }
    }

    pub fn backward(&mut self, cache: &MlpCache, dy: &Array2<f64>) -> Result<Array2<f64>> {
        let dact = self.second.backward(&cache.act, dy)?;
        let mut dh = relu_backward(&cache.pre, &dact);
        if let (Some(norm), Some(c)) = (&mut self.norm, &cache.bn) {
            dh = norm.backward(c, &dh)?;
        }
        self.first.backward(&cache.x, &dh)
    }
}

impl Module for Mlp {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        self.first.visit(&format!("{prefix}.first"), f);
        if let Some(norm) = &mut self.norm {
            norm.visit(&format!("{prefix}.norm"), f);
        }
        self.second.visit(&format!("{prefix}.second"), f);
    }
}
