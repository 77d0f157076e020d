//! Local outlier factor in novelty mode.
//!
//! Training precomputes, for every training point `p`, its `k` nearest other
//! training points, its k-distance and its local reachability density
//!
//! ```text
//! lrd(p) = 1 / mean_{o in N_k(p)} max(k-distance(o), d(p, o))
//! ```
//!
//! A query `x` is scored against the training set only: its `k` nearest
//! training points `o` give `lrd(x)` the same way, and the score is
//! `mean_o lrd(o) / lrd(x)`. Neighbour ties are broken by lowest index.

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Density assigned when every reachability distance is zero (duplicates).
pub const MAX_LRD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct LofParams {
    pub k_neighbors: usize,
}

impl Default for LofParams {
    fn default() -> Self {
        Self { k_neighbors: 20 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lof {
    pub k: usize,
    /// Training points, row-major.
    pub points: Vec<Vec<f64>>,
    pub k_distances: Vec<f64>,
    pub lrd: Vec<f64>,
}

/// The `k` nearest points to `x` as `(index, distance)`, ascending by
/// `(distance, index)`, skipping `exclude`.
fn nearest(points: &[Vec<f64>], x: &[f64], k: usize, exclude: Option<usize>) -> Vec<(usize, f64)> {
    // Sorted by (squared distance, index). Points are scanned in index order,
    // so a later point only displaces an entry with a strictly larger distance.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for (i, p) in points.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.len() == k && d2 >= best[k - 1].0 {
            continue;
        }
        let at = best.partition_point(|&(d, _)| d <= d2);
        best.insert(at, (d2, i));
        best.truncate(k);
    }
    best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
}

fn density(neighbours: &[(usize, f64)], k_distances: &[f64]) -> f64 {
    let mean = neighbours.iter().map(|&(o, d)| k_distances[o].max(d)).sum::<f64>() / neighbours.len() as f64;
    if mean > 0.0 {
        (1.0 / mean).min(MAX_LRD)
    } else {
        MAX_LRD
    }
}

impl Lof {
    pub fn fit(train: ArrayView2<f64>, params: &LofParams) -> Result<Self> {
        Ok(Self::fit_with_scores(train, params)?.0)
    }

    /// Fits and also returns [`Lof::training_scores`] from the same
    /// neighbourhood search.
    pub fn fit_with_scores(train: ArrayView2<f64>, params: &LofParams) -> Result<(Self, Vec<f64>)> {
        let m = train.nrows();
        let k = params.k_neighbors;
        if k == 0 {
            return Err(Error::param("k_neighbors", "must be positive"));
        }
        if k >= m {
            return Err(Error::param("k_neighbors", format!("k = {k} must be smaller than the {m} training rows")));
        }
        let points: Vec<Vec<f64>> = train.rows().into_iter().map(|r| r.to_vec()).collect();
        let neighbours: Vec<Vec<(usize, f64)>> =
            (0..m).into_par_iter().map(|i| nearest(&points, &points[i], k, Some(i))).collect();
        let k_distances: Vec<f64> = neighbours.iter().map(|n| n[k - 1].1).collect();
        let lrd = neighbours.iter().map(|n| density(n, &k_distances)).collect();
        let lof = Self { k, points, k_distances, lrd };
        let scores = neighbours.par_iter().map(|n| lof.factor(n)).collect();
        Ok((lof, scores))
    }

    fn factor(&self, neighbours: &[(usize, f64)]) -> f64 {
        let own = density(neighbours, &self.k_distances);
        neighbours.iter().map(|&(o, _)| self.lrd[o]).sum::<f64>() / (neighbours.len() as f64 * own)
    }

    /// Novelty score of a query; about 1 inside uniform regions, larger in sparse ones.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.factor(&nearest(&self.points, x, self.k, None))
    }

    /// LOF of each training point computed from its own neighbourhood
    /// (excluding itself).
    pub fn training_scores(&self) -> Vec<f64> {
        (0..self.points.len())
            .into_par_iter()
            .map(|i| self.factor(&nearest(&self.points, &self.points[i], self.k, Some(i))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn grid(side: usize) -> Array2<f64> {
        Array2::from_shape_fn((side * side, 2), |(i, j)| if j == 0 { (i / side) as f64 } else { (i % side) as f64 })
    }

    #[test]
    fn grid_interior_scores_near_one() {
        let g = grid(10);
        let lof = Lof::fit(g.view(), &LofParams { k_neighbors: 4 }).unwrap();
        for x in 2..8 {
            for y in 2..8 {
                let s = lof.score(&[x as f64 + 0.5, y as f64 + 0.5]);
                assert!((s - 1.0).abs() <= 0.1, "({x},{y}) -> {s}");
            }
        }
        let train = lof.training_scores();
        for i in 0..100 {
            let (x, y) = (i / 10, i % 10);
            if (2..8).contains(&x) && (2..8).contains(&y) {
                assert!((train[i] - 1.0).abs() <= 0.1);
            }
        }
    }

    #[test]
    fn query_on_training_point_in_uniform_cluster() {
        let g = grid(10);
        let lof = Lof::fit(g.view(), &LofParams { k_neighbors: 8 }).unwrap();
        assert!((lof.score(&[5.0, 5.0]) - 1.0).abs() < 0.1);
        assert!(lof.score(&[30.0, 30.0]) > 2.0);
    }

    #[test]
    fn duplicates_use_density_cap() {
        let dup = Array2::from_elem((6, 2), 1.0);
        let lof = Lof::fit(dup.view(), &LofParams { k_neighbors: 2 }).unwrap();
        assert!(lof.lrd.iter().all(|&l| l == MAX_LRD));
        assert_eq!(lof.score(&[1.0, 1.0]), 1.0);
        assert!(lof.score(&[2.0, 1.0]).is_finite());
    }

    #[test]
    fn rejects_k_not_below_m() {
        let g = grid(2);
        assert!(Lof::fit(g.view(), &LofParams { k_neighbors: 4 }).is_err());
        assert!(Lof::fit(g.view(), &LofParams { k_neighbors: 0 }).is_err());
        assert!(Lof::fit(g.view(), &LofParams { k_neighbors: 3 }).is_ok());
    }

    #[test]
    fn neighbour_ties_go_to_lowest_index() {
        let pts = vec![vec![1.0], vec![-1.0], vec![1.0], vec![0.0]];
        let n = nearest(&pts, &[0.0], 3, Some(3));
        assert_eq!(n.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        let n = nearest(&pts, &[0.0], 2, Some(3));
        assert_eq!(n.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1]);
    }
}
