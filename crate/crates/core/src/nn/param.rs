/// A named parameter or buffer exposed by a module. Buffers carry no gradient.
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: &'a mut [f64],
    pub grad: Option<&'a mut [f64]>,
}

pub trait Module {
    /// Visits every tensor under `prefix` in a fixed order.
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(Tensor<'_>));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn zero_grad(module: &mut dyn Module) {
    module.visit("", &mut |t| {
        if let Some(g) = t.grad {
            g.fill(0.0);
        }
    });
}

/// Trainable parameters concatenated in visit order.
pub fn flat_params(module: &mut dyn Module) -> Vec<f64> {
    let mut out = Vec::new();
    module.visit("", &mut |t| {
        if t.grad.is_some() {
            out.extend_from_slice(t.value);
        }
    });
    out
}

pub fn flat_grads(module: &mut dyn Module) -> Vec<f64> {
    let mut out = Vec::new();
    module.visit("", &mut |t| {
        if let Some(g) = t.grad {
            out.extend_from_slice(g);
        }
    });
    out
}

/// Inverse of [`flat_params`]. Panics if `values` has the wrong length.
pub fn set_flat_params(module: &mut dyn Module, values: &[f64]) {
    let mut offset = 0;
    module.visit("", &mut |t| {
        if t.grad.is_some() {
            let n = t.value.len();
            t.value.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
    });
    assert_eq!(offset, values.len(), "flat parameter length mismatch");
}
