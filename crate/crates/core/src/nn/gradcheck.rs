use crate::error::{shape_err, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a − n| / max(|a|, |n|, 1e-6)` over all coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against fourth-order central differences of the scalar
/// function `f` around `params`:
/// `(-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h`. Truncation is `O(h^4)`,
/// so `h` can be large enough that rounding in `f` stays well below the
/// tolerance on near-zero gradients. `f` is called last with the unperturbed
/// `params`, so any state it writes is restored.
pub fn gradcheck<F>(params: &[f64], analytic: &[f64], step: f64, mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(shape_err("gradcheck", params.len(), analytic.len()));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
        checked: params.len(),
    };
    for i in 0..params.len() {
        let mut at = |k: f64| {
            probe[i] = params[i] + k * step;
            f(&probe)
        };
        let (up2, up, down, down2) = (at(2.0), at(1.0), at(-1.0), at(-2.0));
        probe[i] = params[i];
        if ![up2, up, down, down2, analytic[i]].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("gradcheck"));
        }
        let numeric = (8.0 * (up - down) - (up2 - down2)) / (12.0 * step);
        let abs = (numeric - analytic[i]).abs();
        let rel = abs / numeric.abs().max(analytic[i].abs()).max(1e-6);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
        }
    }
    if !f(params).is_finite() {
        return Err(Error::NonFinite("gradcheck"));
    }
    Ok(report)
}
