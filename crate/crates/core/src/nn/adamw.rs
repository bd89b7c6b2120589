use std::collections::BTreeMap;

use super::param::Module;

/// AdamW with decoupled weight decay:
///
/// ```text
/// p ← p − lr·λ·p
/// m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²
/// p ← p − lr · m̂ / (√v̂ + ε),  m̂ = m/(1−β₁ᵗ), v̂ = v/(1−β₂ᵗ)
/// ```
#[derive(Clone, Debug)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn with_weight_decay(mut self, weight_decay: f64) -> Self {
        self.weight_decay = weight_decay;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable tensor of `module` using its
    /// accumulated gradients.
    pub fn step(&mut self, module: &mut dyn Module) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps, wd) = (self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let moments = &mut self.moments;
        module.visit("", &mut |tensor| {
            let Some(grad) = tensor.grad else { return };
            let (m, v) = moments
                .entry(tensor.name)
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            assert_eq!(m.len(), grad.len(), "parameter shape changed between steps");
            for i in 0..grad.len() {
                let g = grad[i];
                let p = &mut tensor.value[i];
                *p -= lr * wd * *p;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{flat_params, Dense};
    use ndarray::array;

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let mut layer = Dense::from_parts(array![[0.3, -0.2]], array![0.1, 0.0]);
        layer.grad_weight.fill(5.0);
        layer.grad_bias.fill(-2.0);
        let before = flat_params(&mut layer);
        let mut opt = AdamW::new(0.0);
        opt.step(&mut layer);
        assert_eq!(flat_params(&mut layer), before);
    }

    #[test]
    fn zero_gradient_applies_pure_decay() {
        let mut layer = Dense::from_parts(array![[2.0, -4.0]], array![1.0, 0.5]);
        let before = flat_params(&mut layer);
        let mut opt = AdamW::new(0.01).with_weight_decay(0.1);
        opt.step(&mut layer);
        for (a, b) in flat_params(&mut layer).iter().zip(before) {
            assert!((a - b * (1.0 - 0.01 * 0.1)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_step_matches_hand_evaluation() {
        let mut layer = Dense::from_parts(array![[1.5]], array![0.0]);
        layer.grad_weight[[0, 0]] = 0.2;
        let mut opt = AdamW::new(0.001);
        opt.step(&mut layer);
        // decay: 1.5 * (1 - 1e-5) = 1.499985
        // m = 0.02, v = 0.00004, m̂ = 0.2, v̂ = 0.04, step = 0.001 * 0.2 / (0.2 + 1e-8)
        let expected = 1.499985 - 0.001 * 0.2 / (0.2 + 1e-8);
        assert!((layer.weight[[0, 0]] - expected).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
        // second step with same gradient, hand-evaluated
        opt.step(&mut layer);
        let m: f64 = 0.9 * 0.02 + 0.1 * 0.2;
        let v: f64 = 0.999 * 0.00004 + 0.001 * 0.04;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let expected = expected * (1.0 - 1e-5) - 0.001 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((layer.weight[[0, 0]] - expected).abs() < 1e-15);
    }
}
