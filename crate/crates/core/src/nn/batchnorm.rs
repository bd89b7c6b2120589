use ndarray::{Array1, Array2, Axis};

use super::param::{join, Module, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per-feature batch normalization over the rows of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub grad_gamma: Array1<f64>,
    pub grad_beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Saved forward state for [`BatchNorm1d::backward`].
#[derive(Clone, Debug)]
pub struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    batch_stats: bool,
}

impl BatchNorm1d {
    pub fn new(features: usize) -> Self {
        Self {
            gamma: Array1::ones(features),
            beta: Array1::zeros(features),
            grad_gamma: Array1::zeros(features),
            grad_beta: Array1::zeros(features),
            running_mean: Array1::zeros(features),
            running_var: Array1::ones(features),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.features() {
            return Err(shape_err("batchnorm", self.features(), x.ncols()));
        }
        if x.nrows() == 0 {
            return Err(shape_err("batchnorm", "at least one row", 0));
        }
        Ok(())
    }

    fn normalize(&self, x: &Array2<f64>, mean: &Array1<f64>, var: &Array1<f64>) -> BnCache {
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let xhat = (x - mean) * &inv_std;
        BnCache {
            xhat,
            inv_std,
            batch_stats: false,
        }
    }

    /// In train mode with at least two rows the batch statistics are used and
    /// the running statistics updated; a single row falls back to eval mode.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<(Array2<f64>, BnCache)> {
        self.check(x)?;
        let n = x.nrows();
        let cache = if mode == Mode::Train && n >= 2 {
            let mean = x.mean_axis(Axis(0)).expect("non-empty");
            let var = x.var_axis(Axis(0), 0.0);
            let unbiased = &var * (n as f64 / (n as f64 - 1.0));
            self.running_mean = &self.running_mean * (1.0 - self.momentum) + &mean * self.momentum;
            self.running_var = &self.running_var * (1.0 - self.momentum) + &unbiased * self.momentum;
            let mut c = self.normalize(x, &mean, &var);
            c.batch_stats = true;
            c
        } else {
            self.normalize(x, &self.running_mean, &self.running_var)
        };
        let y = &cache.xhat * &self.gamma + &self.beta;
        Ok((y, cache))
    }

    /// Eval-mode forward; does not touch any state.
    pub fn infer(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let c = self.normalize(x, &self.running_mean, &self.running_var);
        Ok(&c.xhat * &self.gamma + &self.beta)
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Array2<f64>) -> Result<Array2<f64>> {
        if dy.dim() != cache.xhat.dim() {
            return Err(shape_err(
                "batchnorm_backward",
                format!("{:?}", cache.xhat.dim()),
                format!("{:?}", dy.dim()),
            ));
        }
        self.grad_gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.grad_beta += &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        if !cache.batch_stats {
            return Ok(dxhat * &cache.inv_std);
        }
        let n = dy.nrows() as f64;
        let sum_d = dxhat.sum_axis(Axis(0));
        let sum_dx = (&dxhat * &cache.xhat).sum_axis(Axis(0));
        let dx = (dxhat * n - &sum_d - &cache.xhat * &sum_dx) * &(&cache.inv_std / n);
        Ok(dx)
    }
}

impl Module for BatchNorm1d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        let n = self.features();
        f(Tensor {
            name: join(prefix, "gamma"),
            shape: vec![n],
            value: self.gamma.as_slice_mut().unwrap(),
            grad: Some(self.grad_gamma.as_slice_mut().unwrap()),
        });
        f(Tensor {
            name: join(prefix, "beta"),
            shape: vec![n],
            value: self.beta.as_slice_mut().unwrap(),
            grad: Some(self.grad_beta.as_slice_mut().unwrap()),
        });
        f(Tensor {
            name: join(prefix, "running_mean"),
            shape: vec![n],
            value: self.running_mean.as_slice_mut().unwrap(),
            grad: None,
        });
        f(Tensor {
            name: join(prefix, "running_var"),
            shape: vec![n],
            value: self.running_var.as_slice_mut().unwrap(),
            grad: None,
        });
    }
}
