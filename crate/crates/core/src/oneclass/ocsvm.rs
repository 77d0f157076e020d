//! ν one-class support vector machine with an RBF kernel.
//!
//! The dual problem
//!
//! ```text
//! minimise  ½ αᵀ K α   subject to  0 ≤ αᵢ ≤ 1 / (ν m),  Σ αᵢ = 1
//! ```
//!
//! is solved by sequential minimal optimisation: each iteration picks the
//! maximal violating pair (the coordinate with the smallest gradient that may
//! still grow and the one with the largest gradient that may still shrink) and
//! moves mass between them in closed form. The decision value is
//! `Σ αᵢ k(xᵢ, x) - ρ`; the anomaly score is its negation so that larger
//! means more anomalous.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Kernel columns kept between iterations.
const COLUMN_CACHE: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `1 / (d * mean per-feature variance)` of the training data.
    Scale,
    Value(f64),
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gamma::Scale => f.write_str("scale"),
            Gamma::Value(g) => write!(f, "{g}"),
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("scale") {
            return Ok(Gamma::Scale);
        }
        match s.parse::<f64>() {
            Ok(g) if g > 0.0 && g.is_finite() => Ok(Gamma::Value(g)),
            _ => Err(Error::param("gamma", format!("expected `scale` or a positive number, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcsvmParams {
    pub nu: f64,
    pub gamma: Gamma,
    /// Stopping threshold on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self { nu: 0.05, gamma: Gamma::Scale, tolerance: 1e-4, max_iterations: 100_000 }
    }
}

pub fn rbf(gamma: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// `1 / (d * mean per-feature population variance)`.
pub fn scale_gamma(train: &ArrayView2<f64>) -> f64 {
    let d = train.ncols() as f64;
    let mean_var = train.columns().into_iter().map(|c| c.var(0.0)).sum::<f64>() / d;
    if mean_var > 0.0 {
        1.0 / (d * mean_var)
    } else {
        1.0 / d
    }
}

/// Result of the dual solve over all training points.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// `K α` at the solution.
    pub gradient: Vec<f64>,
    pub rho: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    /// Maximal KKT violation at exit.
    pub residual: f64,
}

struct KernelColumns<'a> {
    rows: Vec<ArrayView1<'a, f64>>,
    gamma: f64,
    cache: HashMap<usize, Arc<Vec<f64>>>,
    order: std::collections::VecDeque<usize>,
}

impl<'a> KernelColumns<'a> {
    fn new(train: &'a ArrayView2<'a, f64>, gamma: f64) -> Self {
        Self { rows: train.rows().into_iter().collect(), gamma, cache: HashMap::new(), order: Default::default() }
    }

    fn column(&mut self, j: usize) -> Arc<Vec<f64>> {
        if let Some(c) = self.cache.get(&j) {
            return Arc::clone(c);
        }
        let xj = self.rows[j];
        let gamma = self.gamma;
        let col: Vec<f64> = self
            .rows
            .par_iter()
            .map(|xi| {
                let d2: f64 = xi.iter().zip(xj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            })
            .collect();
        let col = Arc::new(col);
        if self.order.len() >= COLUMN_CACHE {
            if let Some(old) = self.order.pop_front() {
                self.cache.remove(&old);
            }
        }
        self.order.push_back(j);
        self.cache.insert(j, Arc::clone(&col));
        col
    }
}

/// Maximal violating pair `(i, j)`: `i` minimises the gradient over
/// coordinates below the upper bound, `j` maximises it over coordinates above
/// zero. Ties go to the lowest index.
fn select_pair(alpha: &[f64], gradient: &[f64], ub: f64) -> Option<(usize, usize, f64)> {
    let mut up: Option<(usize, f64)> = None;
    let mut low: Option<(usize, f64)> = None;
    for (t, (&a, &g)) in alpha.iter().zip(gradient).enumerate() {
        if a < ub && up.is_none_or(|(_, best)| g < best) {
            up = Some((t, g));
        }
        if a > 0.0 && low.is_none_or(|(_, best)| g > best) {
            low = Some((t, g));
        }
    }
    let ((i, gi), (j, gj)) = (up?, low?);
    Some((i, j, gj - gi))
}

/// Solves the dual problem to `params.tolerance`.
pub fn solve_dual(train: ArrayView2<f64>, gamma: f64, params: &OcsvmParams) -> Result<DualSolution> {
    let m = train.nrows();
    let ub = 1.0 / (params.nu * m as f64);

    // Feasible start: the first floor(ν m) coordinates at the bound, the
    // remainder on the next one.
    let mut alpha = vec![0.0; m];
    let full = ((params.nu * m as f64).floor() as usize).min(m);
    for a in alpha.iter_mut().take(full) {
        *a = ub;
    }
    if full < m {
        alpha[full] = (1.0 - full as f64 * ub).max(0.0);
    }

    let mut kernel = KernelColumns::new(&train, gamma);
    let mut gradient = vec![0.0; m];
    for (t, &a) in alpha.iter().enumerate() {
        if a > 0.0 {
            let col = kernel.column(t);
            for (g, k) in gradient.iter_mut().zip(col.iter()) {
                *g += a * k;
            }
        }
    }

    let mut iterations = 0;
    let mut residual;
    loop {
        let (i, j, violation) = select_pair(&alpha, &gradient, ub).unwrap_or((0, 0, 0.0));
        residual = violation.max(0.0);
        if residual <= params.tolerance {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NonConvergence { iterations, residual });
        }
        iterations += 1;

        let ki = kernel.column(i);
        let kj = kernel.column(j);
        let curvature = (ki[i] + kj[j] - 2.0 * ki[j]).max(1e-12);
        let step = (violation / curvature).min(ub - alpha[i]).min(alpha[j]);
        alpha[i] += step;
        alpha[j] -= step;
        if ub - alpha[i] < 1e-15 * ub {
            alpha[i] = ub;
        }
        if alpha[j] < 1e-15 * ub {
            alpha[j] = 0.0;
        }
        gradient.par_iter_mut().zip(ki.par_iter().zip(kj.par_iter())).for_each(|(g, (a, b))| *g += step * (a - b));
    }

    // ρ is the common gradient value of the free coordinates; fall back to
    // the midpoint of the feasible interval when every α sits on a bound.
    let free: Vec<f64> = alpha.iter().zip(&gradient).filter(|(&a, _)| a > 0.0 && a < ub).map(|(_, &g)| g).collect();
    let rho = if free.is_empty() {
        let upper = alpha.iter().zip(&gradient).filter(|(&a, _)| a < ub).map(|(_, &g)| g).fold(f64::INFINITY, f64::min);
        let lower =
            alpha.iter().zip(&gradient).filter(|(&a, _)| a > 0.0).map(|(_, &g)| g).fold(f64::NEG_INFINITY, f64::max);
        match (upper.is_finite(), lower.is_finite()) {
            (true, true) => 0.5 * (upper + lower),
            (true, false) => upper,
            _ => lower,
        }
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    Ok(DualSolution { alpha, gradient, rho, upper_bound: ub, iterations, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSvm {
    /// Training rows with `α > 0`, row-major.
    pub support_vectors: Vec<Vec<f64>>,
    pub dual_coefficients: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub dim: usize,
}

impl OneClassSvm {
    pub fn fit(train: ArrayView2<f64>, params: &OcsvmParams) -> Result<Self> {
        Ok(Self::fit_with_solution(train, params)?.0)
    }

    /// Fits and also returns the full dual solution (for diagnostics and tests).
    pub fn fit_with_solution(train: ArrayView2<f64>, params: &OcsvmParams) -> Result<(Self, DualSolution)> {
        let m = train.nrows();
        if m < 2 {
            return Err(Error::param("train", format!("one-class SVM needs at least 2 rows, got {m}")));
        }
        if !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(Error::param("nu", format!("must lie in (0, 1], got {}", params.nu)));
        }
        if !(params.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        let gamma = match params.gamma {
            Gamma::Scale => scale_gamma(&train),
            Gamma::Value(g) if g > 0.0 => g,
            Gamma::Value(g) => return Err(Error::param("gamma", format!("must be positive, got {g}"))),
        };
        let sol = solve_dual(train, gamma, params)?;
        let (support_vectors, dual_coefficients) =
            sol.alpha.iter().enumerate().filter(|(_, &a)| a > 0.0).map(|(t, &a)| (train.row(t).to_vec(), a)).unzip();
        let model = Self { support_vectors, dual_coefficients, rho: sol.rho, gamma, dim: train.ncols() };
        Ok((model, sol))
    }

    /// `Σ αᵢ k(xᵢ, x)`.
    pub fn kernel_sum(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.dual_coefficients).map(|(sv, a)| a * rbf(self.gamma, sv, x)).sum()
    }

    /// `ρ - Σ αᵢ k(xᵢ, x)`; positive outside the learned support.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.rho - self.kernel_sum(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(m: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::seeded(seed);
        Array2::from_shape_fn((m, d), |_| StandardNormal.sample(&mut r))
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf(0.7, &[1.0, 2.0], &[1.0, 2.0]), 1.0);
        assert_abs_diff_eq!(rbf(0.5, &[0.0, 0.0], &[1.0, 1.0]), (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(rbf(0.5, &[0.0, 0.0], &[1.0, 1.0]), 0.36788, epsilon = 1e-5);
    }

    #[test]
    fn gamma_parsing() {
        assert_eq!("scale".parse::<Gamma>().unwrap(), Gamma::Scale);
        assert_eq!("0.25".parse::<Gamma>().unwrap(), Gamma::Value(0.25));
        assert!("-1".parse::<Gamma>().is_err());
    }

    #[test]
    fn dual_constraints_and_kkt_hold() {
        let data = gaussian(400, 3, 1);
        let params = OcsvmParams { nu: 0.1, ..Default::default() };
        let (_, sol) = OneClassSvm::fit_with_solution(data.view(), &params).unwrap();
        let sum: f64 = sol.alpha.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        assert!(sol.alpha.iter().all(|&a| (0.0..=sol.upper_bound).contains(&a)));
        assert!(sol.residual <= params.tolerance);
        let at_bound = sol.alpha.iter().filter(|&&a| a == sol.upper_bound).count();
        assert!(at_bound <= (0.1 * 400.0f64).ceil() as usize);
    }

    #[test]
    fn nu_bounds_training_outlier_fraction() {
        let data = gaussian(1000, 5, 2);
        let params = OcsvmParams { nu: 0.1, ..Default::default() };
        let model = OneClassSvm::fit(data.view(), &params).unwrap();
        let outside = data.rows().into_iter().filter(|r| model.score(r.as_slice().unwrap()) > 0.0).count();
        assert!((outside as f64) / 1000.0 <= 0.15, "{outside} training points outside");
    }

    #[test]
    fn remote_point_scores_higher() {
        let data = gaussian(300, 2, 3);
        let model = OneClassSvm::fit(data.view(), &OcsvmParams::default()).unwrap();
        assert!(model.score(&[6.0, 6.0]) > model.score(&[0.0, 0.0]));
        assert!(model.score(&[6.0, 6.0]) > 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let data = gaussian(10, 2, 4);
        assert!(OneClassSvm::fit(data.view(), &OcsvmParams { nu: 0.0, ..Default::default() }).is_err());
        assert!(OneClassSvm::fit(data.view(), &OcsvmParams { nu: 1.5, ..Default::default() }).is_err());
        assert!(OneClassSvm::fit(data.slice(ndarray::s![..1, ..]), &OcsvmParams::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let data = gaussian(200, 2, 5);
        let params = OcsvmParams { max_iterations: 1, tolerance: 1e-12, ..Default::default() };
        match OneClassSvm::fit(data.view(), &params) {
            Err(Error::NonConvergence { iterations, residual }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
