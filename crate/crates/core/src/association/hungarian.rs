use ndarray::Array2;

/// Minimum-cost one-to-one assignment over the allowed entries of a
/// rectangular cost matrix. Among all matchings of maximum cardinality the one
/// with the lowest total cost is returned, as `(row, column)` pairs sorted by
/// row. `forbidden` entries never appear in the result.
pub fn hungarian(cost: &Array2<f64>, forbidden: Option<&Array2<bool>>) -> Vec<(usize, usize)> {
    let (rows, cols) = cost.dim();
    if let Some(f) = forbidden {
        assert_eq!(f.dim(), cost.dim(), "forbidden mask must match the cost matrix");
    }
    let allowed = |i: usize, j: usize| forbidden.is_none_or(|f| !f[[i, j]]);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let span = cost
        .indexed_iter()
        .filter(|&((i, j), _)| allowed(i, j))
        .map(|(_, &c)| c.abs())
        .fold(0.0, f64::max);
    // any matching with one more allowed edge is cheaper than one without
    let big = (span + 1.0) * (2 * n + 1) as f64;
    let at = |i: usize, j: usize| {
        if i < rows && j < cols && allowed(i, j) {
            cost[[i, j]]
        } else {
            big
        }
    };

    // Shortest augmenting path with potentials, 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .filter(|&(i, j)| i < rows && j < cols && allowed(i, j))
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn assignment_cost(cost: &Array2<f64>, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(i, j)| cost[[i, j]]).sum()
}
