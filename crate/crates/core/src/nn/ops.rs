use ndarray::{Array2, Array3};

use crate::model::Vec2;

/// Numerically stable softmax of one row.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.rows_mut() {
        let s = softmax(row.as_slice().expect("standard layout"));
        row.iter_mut().zip(s).for_each(|(r, v)| *r = v);
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Subgradient at zero is zero.
pub fn relu_backward(pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    dx.zip_mut_with(pre, |d, &p| {
        if p <= 0.0 {
            *d = 0.0
        }
    });
    dx
}

/// For every point, the indices of its `k` nearest neighbours (self included),
/// ordered by distance with ties broken by lower index. Self always sorts first
/// among zero-distance candidates. When fewer than `k` points exist the row is
/// front-padded with self so distances stay non-decreasing.
pub fn knn_indices(points: &[Vec2], k: usize) -> Array2<usize> {
    let m = points.len();
    let mut out = Array2::zeros((m, k));
    let mut order: Vec<(f64, bool, usize)> = Vec::with_capacity(m);
    for (i, &p) in points.iter().enumerate() {
        order.clear();
        order.extend(
            points
                .iter()
                .enumerate()
                .map(|(j, &q)| ((p - q).dot(p - q), j != i, j)),
        );
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let pad = k.saturating_sub(m);
        let mut row = out.row_mut(i);
        for slot in 0..k {
            row[slot] = if slot < pad { i } else { order[slot - pad].2 };
        }
    }
    out
}

/// Neighbourhoods of a point set with gathered features and relative positions
/// `r_ij = p_i - p_j`.
#[derive(Clone, Debug)]
pub struct SampleGroup {
    pub indices: Array2<usize>,
    pub grouped_features: Array3<f64>,
    pub relative_positions: Array3<f64>,
}

pub fn knn_sample_group(points: &[Vec2], features: &Array2<f64>, k: usize) -> SampleGroup {
    assert_eq!(points.len(), features.nrows(), "one feature row per point");
    let indices = knn_indices(points, k);
    let (m, d) = features.dim();
    let grouped_features =
        Array3::from_shape_fn((m, k, d), |(i, j, c)| features[[indices[[i, j]], c]]);
    let relative_positions = Array3::from_shape_fn((m, k, 2), |(i, j, c)| {
        let r = points[i] - points[indices[[i, j]]];
        if c == 0 {
            r.x
        } else {
            r.y
        }
    });
    SampleGroup {
        indices,
        grouped_features,
        relative_positions,
    }
}
