use ndarray::Array2;

use crate::error::{shape_err, Error, Result};

/// Lower/upper clamp applied to predicted probabilities.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_rows(op: &'static str, o: &Array2<f64>, c: &Array2<f64>, p: &Array2<f64>) -> Result<()> {
    for m in [o, c, p] {
        if m.dim() != o.dim() || m.ncols() != 2 {
            return Err(shape_err(op, format!("{}x2", o.nrows()), format!("{:?}", m.dim())));
        }
    }
    if o.nrows() == 0 {
        return Err(Error::Empty(op));
    }
    Ok(())
}

/// Mean over points of `‖o_i − (c_i − p_i)‖₁`.
pub fn offset_l1_loss(offsets: &Array2<f64>, centers: &Array2<f64>, points: &Array2<f64>) -> Result<f64> {
    check_rows("offset_l1_loss", offsets, centers, points)?;
    let residual = offsets - &(centers - points);
    Ok(residual.mapv(f64::abs).sum() / offsets.nrows() as f64)
}

/// Masked variant returning the loss and its gradient with respect to the
/// offsets. Only rows with `mask[i]` count, and the mean is over those rows.
pub fn offset_l1_loss_masked(
    offsets: &Array2<f64>,
    centers: &Array2<f64>,
    points: &Array2<f64>,
    mask: &[bool],
) -> Result<(f64, Array2<f64>)> {
    check_rows("offset_l1_loss", offsets, centers, points)?;
    if mask.len() != offsets.nrows() {
        return Err(shape_err("offset_l1_loss", offsets.nrows(), mask.len()));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Empty("offset_l1_loss mask"));
    }
    let residual = offsets - &(centers - points);
    let mut grad = Array2::zeros(offsets.dim());
    let mut loss = 0.0;
    for (i, &keep) in mask.iter().enumerate() {
        if keep {
            for c in 0..2 {
                let r = residual[[i, c]];
                loss += r.abs();
                grad[[i, c]] = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                } / n as f64;
            }
        }
    }
    Ok((loss / n as f64, grad))
}

/// Masked mean binary cross entropy and its gradient with respect to the
/// predictions. Predictions are clamped into `[BCE_CLAMP, 1 − BCE_CLAMP]`;
/// clamped entries receive zero gradient.
pub fn bce_loss(
    predicted: &Array2<f64>,
    target: &Array2<f64>,
    mask: &Array2<bool>,
) -> Result<(f64, Array2<f64>)> {
    if predicted.dim() != target.dim() || predicted.dim() != mask.dim() {
        return Err(shape_err(
            "bce_loss",
            format!("{:?}", predicted.dim()),
            format!("{:?} / {:?}", target.dim(), mask.dim()),
        ));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::Empty("bce_loss mask"));
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(predicted.dim());
    for ((idx, &a), (&y, &m)) in predicted.indexed_iter().zip(target.iter().zip(mask.iter())) {
        if !m {
            continue;
        }
        let clamped = a.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        loss -= y * clamped.ln() + (1.0 - y) * (1.0 - clamped).ln();
        if clamped == a {
            grad[idx] = -(y / a - (1.0 - y) / (1.0 - a)) * inv_n;
        }
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l1_exact_offsets_give_zero() {
        let p = array![[1.0, 2.0], [3.0, -1.0]];
        let c = array![[2.0, 0.5], [2.0, 0.5]];
        let o = &c - &p;
        assert_eq!(offset_l1_loss(&o, &c, &p).unwrap(), 0.0);
    }

    #[test]
    fn l1_single_point() {
        let p = array![[4.0, 4.0]];
        assert_eq!(offset_l1_loss(&array![[1.0, 0.0]], &p, &p).unwrap(), 1.0);
    }

    #[test]
    fn l1_matches_per_point_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut r = || Array2::<f64>::from_shape_fn((2, 2), |_| rng.random_range(-5.0..5.0));
        let (o, c, p) = (r(), r(), r());
        let mut acc = 0.0;
        for i in 0..2 {
            acc += (o[[i, 0]] - (c[[i, 0]] - p[[i, 0]])).abs();
            acc += (o[[i, 1]] - (c[[i, 1]] - p[[i, 1]])).abs();
        }
        assert!((offset_l1_loss(&o, &c, &p).unwrap() - acc / 2.0).abs() < 1e-12);
        let (masked, _) = offset_l1_loss_masked(&o, &c, &p, &[true, true]).unwrap();
        assert!((masked - acc / 2.0).abs() < 1e-12);
    }

    #[test]
    fn l1_empty_is_error() {
        let e = Array2::<f64>::zeros((0, 2));
        assert!(offset_l1_loss(&e, &e, &e).is_err());
    }

    #[test]
    fn l1_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut r = || Array2::from_shape_fn((5, 2), |_| rng.random_range(-5.0..5.0));
        let (o, c, p) = (r(), r(), r());
        let mask = [true, false, true, true, false];
        let (_, g) = offset_l1_loss_masked(&o, &c, &p, &mask).unwrap();
        let o0: Vec<f64> = o.iter().copied().collect();
        let rep = gradcheck(&o0, g.as_slice().unwrap(), 1e-5, |v| {
            let oi = Array2::from_shape_vec((5, 2), v.to_vec()).unwrap();
            offset_l1_loss_masked(&oi, &c, &p, &mask).unwrap().0
        })
        .unwrap();
        assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
    }

    #[test]
    fn bce_at_one_half_is_ln2() {
        let a = Array2::from_elem((2, 3), 0.5);
        let y = array![[0.0, 1.0, 1.0], [0.0, 0.0, 1.0]];
        let m = Array2::from_elem((2, 3), true);
        let (l, _) = bce_loss(&a, &y, &m).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_limit_is_near_zero() {
        let y = array![[0.0, 1.0]];
        let m = Array2::from_elem((1, 2), true);
        let (l, _) = bce_loss(&y, &y, &m).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn bce_empty_mask_is_error() {
        let a = Array2::from_elem((1, 1), 0.3);
        assert!(bce_loss(&a, &a, &Array2::from_elem((1, 1), false)).is_err());
    }

    #[test]
    fn bce_matches_formula_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.05..0.95));
        let y = Array2::from_shape_fn((3, 4), |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let m = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) % 3 != 0);
        let (l, g) = bce_loss(&a, &y, &m).unwrap();
        let mut acc = 0.0;
        let mut n = 0.0;
        for ((i, j), &ai) in a.indexed_iter() {
            if m[[i, j]] {
                acc += -(y[[i, j]] * ai.ln() + (1.0 - y[[i, j]]) * (1.0 - ai).ln());
                n += 1.0;
            }
        }
        assert!((l - acc / n).abs() < 1e-12);
        let a0: Vec<f64> = a.iter().copied().collect();
        let rep = gradcheck(&a0, g.as_slice().unwrap(), 1e-6, |v| {
            let ai = Array2::from_shape_vec((3, 4), v.to_vec()).unwrap();
            bce_loss(&ai, &y, &m).unwrap().0
        })
        .unwrap();
        assert!(rep.max_rel_error <= 1e-5, "{rep:?}");
    }
}
