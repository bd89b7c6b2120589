use std::collections::VecDeque;

use crate::model::Vec2;

/// Density-based clustering with an inclusive `eps` radius; a point counts
/// itself towards `min_pts`. Cluster labels are assigned in first-seen order;
/// `None` marks noise. With `min_pts = 1` the clusters are exactly the
/// connected components of the `eps`-graph.
pub fn dbscan(points: &[Vec2], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (points[i] - points[j]).dot(points[i] - points[j]) <= eps2)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_pts {
            continue;
        }
        let cluster = next;
        next += 1;
        labels[i] = Some(cluster);
        let mut queue: VecDeque<usize> = seeds.into_iter().filter(|&j| j != i).collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = neighbors(j);
            if nb.len() >= min_pts {
                queue.extend(nb.into_iter().filter(|&k| !visited[k]));
            }
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(xs: &[(f64, f64)]) -> Vec<Vec2> {
        xs.iter().map(|&(x, y)| Vec2::new(x, y)).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(dbscan(&pts(&[(0.0, 0.0), (5.0, 0.0)]), 10.0, 1), vec![Some(0), Some(0)]);
        assert_eq!(dbscan(&pts(&[(0.0, 0.0), (25.0, 0.0)]), 10.0, 1), vec![Some(0), Some(1)]);
        assert_eq!(
            dbscan(&pts(&[(0.0, 0.0), (8.0, 0.0), (16.0, 0.0)]), 10.0, 1),
            vec![Some(0); 3]
        );
        assert_eq!(dbscan(&pts(&[(0.0, 0.0), (10.0, 0.0)]), 10.0, 1), vec![Some(0); 2]);
        assert!(dbscan(&[], 1.0, 1).is_empty());
    }

    #[test]
    fn noise_and_border_points() {
        // three dense points, one border point reachable from a core point, one outlier
        let p = pts(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.9, 0.0), (9.0, 9.0)]);
        let l = dbscan(&p, 1.0, 3);
        assert_eq!(l, vec![Some(0), Some(0), Some(0), Some(0), None]);
    }

    fn components(points: &[Vec2], eps: f64) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..points.len()).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for i in 0..points.len() {
            for j in 0..i {
                if (points[i] - points[j]).norm() <= eps {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        (0..points.len()).map(|i| find(&mut parent, i)).collect()
    }

    proptest! {
        #[test]
        fn min_pts_one_equals_connected_components(
            raw in prop::collection::vec((0.0..60.0f64, 0.0..60.0f64), 0..30),
            eps in 1.0..15.0f64,
        ) {
            let p: Vec<Vec2> = raw.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let labels = dbscan(&p, eps, 1);
            let comp = components(&p, eps);
            for i in 0..p.len() {
                for j in 0..p.len() {
                    prop_assert_eq!(labels[i] == labels[j], comp[i] == comp[j]);
                }
            }
        }
    }
}
