use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::param::{join, Module, Tensor};
use crate::error::{shape_err, Result};

/// Fully connected layer computing `X W + b` row-wise, `W` being `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

impl Dense {
    /// Uniform initialization in `±1/sqrt(in_dim)` for weights and bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = Array2::from_shape_fn((in_dim, out_dim), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(out_dim, |_| rng.random_range(-bound..bound));
        Self::from_parts(weight, bias)
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::from_parts(Array2::zeros((in_dim, out_dim)), Array1::zeros(out_dim))
    }

    pub fn from_parts(weight: Array2<f64>, bias: Array1<f64>) -> Self {
        assert_eq!(weight.ncols(), bias.len(), "bias length must equal out_dim");
        let grad_weight = Array2::zeros(weight.raw_dim());
        let grad_bias = Array1::zeros(bias.raw_dim());
        Self {
            weight: weight.as_standard_layout().to_owned(),
            bias,
            grad_weight,
            grad_bias,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(shape_err("dense_forward", self.in_dim(), x.ncols()));
        }
        Ok(x.dot(&self.weight) + &self.bias)
    }

    /// Accumulates `dW += Xᵀ dY`, `db += Σ_rows dY` and returns `dX = dY Wᵀ`.
    pub fn backward(&mut self, x: &Array2<f64>, dy: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.in_dim() {
            return Err(shape_err("dense_backward", self.in_dim(), x.ncols()));
        }
        if dy.ncols() != self.out_dim() || dy.nrows() != x.nrows() {
            return Err(shape_err(
                "dense_backward",
                format!("{}x{}", x.nrows(), self.out_dim()),
                format!("{}x{}", dy.nrows(), dy.ncols()),
            ));
        }
        self.grad_weight += &x.t().dot(dy);
        self.grad_bias += &dy.sum_axis(Axis(0));
        Ok(dy.dot(&self.weight.t()))
    }
}

impl Module for Dense {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>)) {
        f(Tensor {
            name: join(prefix, "weight"),
            shape: self.weight.shape().to_vec(),
            value: self.weight.as_slice_mut().expect("standard layout"),
            grad: Some(self.grad_weight.as_slice_mut().expect("standard layout")),
        });
        f(Tensor {
            name: join(prefix, "bias"),
            shape: vec![self.bias.len()],
            value: self.bias.as_slice_mut().expect("standard layout"),
            grad: Some(self.grad_bias.as_slice_mut().expect("standard layout")),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{flat_grads, flat_params, gradcheck, set_flat_params, zero_grad};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_and_bias_only() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let id = Dense::from_parts(Array2::eye(2), Array1::zeros(2));
        assert_eq!(id.forward(&x).unwrap(), x);
        let b = Dense::from_parts(Array2::zeros((2, 3)), array![1.0, 2.0, 3.0]);
        let y = b.forward(&x).unwrap();
        for row in y.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 2.0, 3.0]);
        }
    }

    #[test]
    fn forward_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = Dense::new(4, 2, &mut rng);
        let x = random_matrix(&mut rng, 3, 4);
        let y = layer.forward(&x).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut acc = layer.bias[j];
                for k in 0..4 {
                    acc += x[[i, k]] * layer.weight[[k, j]];
                }
                assert!((y[[i, j]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let layer = Dense::zeros(3, 2);
        assert!(layer.forward(&Array2::zeros((1, 4))).is_err());
        let mut layer = layer;
        assert!(layer.backward(&Array2::zeros((1, 3)), &Array2::zeros((2, 2))).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut layer = Dense::new(3, 2, &mut rng);
        let x = random_matrix(&mut rng, 4, 3);
        let dx = layer.backward(&x, &Array2::zeros((4, 2))).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        assert!(flat_grads(&mut layer).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule() {
        let mut layer = Dense::from_parts(array![[0.7]], array![0.1]);
        let dx = layer.backward(&array![[2.0]], &array![[3.0]]).unwrap();
        assert_eq!(layer.grad_weight[[0, 0]], 6.0);
        assert_eq!(layer.grad_bias[0], 3.0);
        assert!((dx[[0, 0]] - 2.1).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut layer = Dense::new(4, 3, &mut rng);
        let x = random_matrix(&mut rng, 5, 4);
        let proj = random_matrix(&mut rng, 5, 3);
        zero_grad(&mut layer);
        layer.backward(&x, &proj).unwrap();
        let analytic = flat_grads(&mut layer);
        let p0 = flat_params(&mut layer);
        let report = gradcheck(&p0, &analytic, 1e-5, |p| {
            set_flat_params(&mut layer, p);
            (layer.forward(&x).unwrap() * &proj).sum()
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");

        // input gradient
        let dx = layer.backward(&x, &proj).unwrap();
        let x0: Vec<f64> = x.iter().copied().collect();
        let report = gradcheck(&x0, dx.as_slice().unwrap(), 1e-5, |v| {
            let xi = Array2::from_shape_vec((5, 4), v.to_vec()).unwrap();
            (layer.forward(&xi).unwrap() * &proj).sum()
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }
}
