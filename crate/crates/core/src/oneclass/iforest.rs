//! Isolation forest.
//!
//! Each tree is grown on a random subsample of `psi` rows by splitting on a
//! random feature at a uniform cut between the node's min and max, until the
//! node holds one row or the depth reaches `ceil(log2 psi)`. The anomaly score
//! of `x` is `2^(-E[h(x)] / c(psi))`, where `h` is the path length plus the
//! `c(size)` correction at truncated leaves.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

const EULER_GAMMA: f64 = 0.577_215_664_9;

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForestParams {
    pub num_trees: usize,
    pub subsample_size: usize,
    pub seed: u64,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self { num_trees: 100, subsample_size: 256, seed: 0 }
    }
}

/// Average path length of an unsuccessful BST search over `n` points.
///
/// `c(n) = 2 H(n-1) - 2 (n-1) / n` with `H(i) ~ ln i + gamma`; `c(2) = 1`
/// uses the exact harmonic number.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split { feature: usize, cut: f64, left: usize, right: usize },
    Leaf { size: usize },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct IsolationTree {
    pub nodes: Vec<Node>,
}

impl IsolationTree {
    fn grow(data: &ArrayView2<f64>, rows: Vec<usize>, max_depth: usize, rng: &mut rng::Rng) -> Self {
        let mut tree = IsolationTree { nodes: Vec::new() };
        tree.grow_node(data, rows, 0, max_depth, rng);
        tree
    }

    fn grow_node(
        &mut self,
        data: &ArrayView2<f64>,
        rows: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut rng::Rng,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: rows.len() });
        if rows.len() <= 1 || depth >= max_depth {
            return id;
        }

        // Only features that vary within the node can separate its rows.
        let ranges: Vec<(usize, f64, f64)> = (0..data.ncols())
            .filter_map(|j| {
                let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = data[[i, j]];
                    (lo.min(v), hi.max(v))
                });
                (hi > lo).then_some((j, lo, hi))
            })
            .collect();
        if ranges.is_empty() {
            return id;
        }

        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let mut cut = lo + rng.random::<f64>() * (hi - lo);
        if cut >= hi {
            cut = lo;
        }
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| data[[i, feature]] <= cut);

        let left = self.grow_node(data, left_rows, depth + 1, max_depth, rng);
        let right = self.grow_node(data, right_rows, depth + 1, max_depth, rng);
        self.nodes[id] = Node::Split { feature, cut, left, right };
        id
    }

    /// Path length of `x` including the leaf-size correction.
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut node = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[node] {
                Node::Split { feature, cut, left, right } => {
                    node = if x[feature] <= cut { left } else { right };
                    depth += 1.0;
                }
                Node::Leaf { size } => return depth + average_path_length(size),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsolationForest {
    pub trees: Vec<IsolationTree>,
    /// Effective subsample size `min(subsample_size, m)`.
    pub subsample_size: usize,
    /// `c(subsample_size)`.
    pub c_norm: f64,
    pub dim: usize,
}

impl IsolationForest {
    pub fn fit(train: ArrayView2<f64>, params: &IsolationForestParams) -> Result<Self> {
        let m = train.nrows();
        if m < 2 {
            return Err(Error::param("train", format!("isolation forest needs at least 2 rows, got {m}")));
        }
        if params.num_trees == 0 {
            return Err(Error::param("num_trees", "must be positive"));
        }
        if params.subsample_size < 2 {
            return Err(Error::param("subsample_size", "must be at least 2"));
        }
        let first = train.row(0);
        if train.rows().into_iter().all(|r| r == first) {
            return Err(Error::Degenerate("all training rows are identical".into()));
        }

        let psi = params.subsample_size.min(m);
        let max_depth = (psi as f64).log2().ceil() as usize;
        let trees = (0..params.num_trees as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::substream(params.seed, &[t]);
                let rows = index::sample(&mut rng, m, psi).into_vec();
                IsolationTree::grow(&train, rows, max_depth, &mut rng)
            })
            .collect();

        Ok(Self { trees, subsample_size: psi, c_norm: average_path_length(psi), dim: train.ncols() })
    }

    pub fn mean_path_length(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Anomaly score in `(0, 1)`; values near 1 are easy to isolate.
    pub fn score(&self, x: &[f64]) -> f64 {
        (-self.mean_path_length(x) / self.c_norm).exp2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand_distr::{Distribution, Normal};

    fn cluster(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, 0.1).unwrap();
        Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng))
    }

    #[test]
    fn normalisation_constant() {
        assert_eq!(average_path_length(1), 0.0);
        assert_eq!(average_path_length(2), 1.0);
        // 2 (ln 255 + gamma) - 2 * 255 / 256
        let expected = 2.0 * (255f64.ln() + 0.5772156649) - 2.0 * 255.0 / 256.0;
        assert_abs_diff_eq!(average_path_length(256), expected, epsilon = 1e-9);
        assert_abs_diff_eq!(average_path_length(256), 10.2448, epsilon = 1e-4);
    }

    #[test]
    fn far_point_scores_above_centroid() {
        let data = cluster(500, 1);
        let forest = IsolationForest::fit(data.view(), &IsolationForestParams::default()).unwrap();
        let centre = forest.score(&[0.0, 0.0]);
        let far = forest.score(&[3.0, -3.0]);
        assert!(far > centre, "far {far} centre {centre}");
        for row in data.rows() {
            let s = forest.score(row.as_slice().unwrap());
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn depth_is_bounded() {
        let data = cluster(300, 2);
        let params = IsolationForestParams { num_trees: 10, subsample_size: 64, seed: 3 };
        let forest = IsolationForest::fit(data.view(), &params).unwrap();
        for tree in &forest.trees {
            let x = [0.01, 0.02];
            let mut node = 0;
            let mut depth = 0;
            while let Node::Split { feature, cut, left, right } = tree.nodes[node] {
                node = if x[feature] <= cut { left } else { right };
                depth += 1;
            }
            assert!(depth <= 6);
        }
    }

    #[test]
    fn small_training_set_uses_all_rows() {
        let data = cluster(20, 4);
        let forest = IsolationForest::fit(data.view(), &IsolationForestParams::default()).unwrap();
        assert_eq!(forest.subsample_size, 20);
    }

    #[test]
    fn rejects_degenerate_training_data() {
        let same = Array2::from_elem((10, 3), 1.5);
        assert!(matches!(IsolationForest::fit(same.view(), &Default::default()), Err(Error::Degenerate(_))));
        let one = Array2::zeros((1, 3));
        assert!(IsolationForest::fit(one.view(), &Default::default()).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let data = cluster(400, 5);
        let p = IsolationForestParams { seed: 9, ..Default::default() };
        assert_eq!(IsolationForest::fit(data.view(), &p).unwrap(), IsolationForest::fit(data.view(), &p).unwrap());
    }
}
