//! Minimum covariance determinant via FastMCD.
//!
//! The estimator looks for the `h` rows whose sample covariance has the
//! smallest determinant. FastMCD starts from many random `(d+1)`-subsets and
//! improves each with C-steps: compute the mean and covariance of the current
//! `h` rows, then keep the `h` rows with the smallest Mahalanobis distances.
//! A C-step never increases the determinant. The raw (unreweighted) location
//! and covariance are used for scoring.

use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

/// C-steps applied to every initial subset before ranking.
const INITIAL_C_STEPS: usize = 2;
/// Candidates refined to convergence.
const REFINED_CANDIDATES: usize = 10;
const MAX_REFINEMENT_STEPS: usize = 100;
/// Relative determinant below which a covariance is treated as singular.
const SINGULAR_RATIO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct McdParams {
    /// Fraction of rows in the support; `None` uses `floor((m + d + 1) / 2)`.
    pub support_fraction: Option<f64>,
    pub num_initial_subsets: usize,
    pub seed: u64,
}

impl Default for McdParams {
    fn default() -> Self {
        Self { support_fraction: None, num_initial_subsets: 500, seed: 0 }
    }
}

/// Mean and covariance (normalised by the row count) of a row subset.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub location: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub det: f64,
}

impl Estimate {
    pub fn from_rows(data: &ArrayView2<f64>, rows: &[usize]) -> Self {
        let d = data.ncols();
        let n = rows.len() as f64;
        let mut location = DVector::zeros(d);
        for &i in rows {
            for j in 0..d {
                location[j] += data[[i, j]];
            }
        }
        location /= n;
        let mut covariance = DMatrix::zeros(d, d);
        let mut centred = vec![0.0; d];
        for &i in rows {
            for j in 0..d {
                centred[j] = data[[i, j]] - location[j];
            }
            for a in 0..d {
                for b in 0..=a {
                    covariance[(a, b)] += centred[a] * centred[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = covariance[(a, b)] / n;
                covariance[(a, b)] = v;
                covariance[(b, a)] = v;
            }
        }
        let det = covariance.determinant();
        Self { location, covariance, det }
    }

    /// `det / prod(diag)`; zero or negative for singular matrices.
    fn relative_det(&self) -> f64 {
        let diag: f64 = self.covariance.diagonal().iter().product();
        if diag > 0.0 {
            self.det / diag
        } else {
            0.0
        }
    }

    pub fn is_singular(&self) -> bool {
        !(self.relative_det() > SINGULAR_RATIO)
    }

    /// Squared Mahalanobis distances of every row; `None` when singular.
    pub fn squared_distances(&self, data: &ArrayView2<f64>) -> Option<Vec<f64>> {
        let chol = self.covariance.clone().cholesky()?;
        let precision = chol.inverse();
        let d = data.ncols();
        let mut diff = vec![0.0; d];
        Some(
            (0..data.nrows())
                .map(|i| {
                    for (j, v) in diff.iter_mut().enumerate() {
                        *v = data[[i, j]] - self.location[j];
                    }
                    quadratic_form(&precision, &diff)
                })
                .collect(),
        )
    }
}

fn quadratic_form(precision: &DMatrix<f64>, diff: &[f64]) -> f64 {
    let d = diff.len();
    let mut acc = 0.0;
    for a in 0..d {
        let mut row = 0.0;
        for b in 0..d {
            row += precision[(a, b)] * diff[b];
        }
        acc += diff[a] * row;
    }
    acc
}

/// Indices of the `h` smallest values; ties go to the lowest index. Sorted.
fn smallest_h(values: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let key = |&i: &usize| (values[i], i);
    if h < idx.len() {
        idx.select_nth_unstable_by(h, |a, b| key(a).partial_cmp(&key(b)).expect("finite distances"));
        idx.truncate(h);
    }
    idx.sort_unstable();
    idx
}

/// One concentration step from `rows`: returns the `h` rows closest to the
/// estimate of `rows` together with their own estimate.
pub fn c_step(data: &ArrayView2<f64>, rows: &[usize], h: usize) -> Option<(Vec<usize>, Estimate)> {
    let current = Estimate::from_rows(data, rows);
    let dist = current.squared_distances(data)?;
    let next = smallest_h(&dist, h);
    let estimate = Estimate::from_rows(data, &next);
    Some((next, estimate))
}

/// Support size for `m` rows in `d` dimensions.
pub fn support_size(m: usize, d: usize, fraction: Option<f64>) -> usize {
    let default = (m + d).div_ceil(2); // floor((m + d + 1) / 2)
    match fraction {
        Some(f) => ((f * m as f64).ceil() as usize).clamp(default, m),
        None => default,
    }
}

/// Random `(d+1)`-subset grown until its covariance is non-singular.
fn initial_subset(data: &ArrayView2<f64>, h: usize, rng: &mut rng::Rng) -> Option<Vec<usize>> {
    let m = data.nrows();
    let d = data.ncols();
    let mut perm = index::sample(rng, m, m).into_vec();
    let mut size = d + 1;
    loop {
        let rows = &perm[..size];
        if !Estimate::from_rows(data, rows).is_singular() {
            return Some(rows.to_vec());
        }
        if size >= h {
            return None;
        }
        size += 1;
        // Keep the prefix random without reshuffling it.
        let j = rng.random_range(size - 1..m);
        perm.swap(size - 1, j);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mcd {
    pub location: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub precision: Vec<Vec<f64>>,
    /// Number of rows in the selected support.
    pub support: usize,
}

impl Mcd {
    pub fn fit(train: ArrayView2<f64>, params: &McdParams) -> Result<Self> {
        let m = train.nrows();
        let d = train.ncols();
        if m <= 2 * (d + 1) {
            return Err(Error::param("train", format!("MCD needs more than {} rows, got {m}", 2 * (d + 1))));
        }
        if params.num_initial_subsets == 0 {
            return Err(Error::param("num_initial_subsets", "must be positive"));
        }
        if let Some(f) = params.support_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::param("support_fraction", format!("must lie in (0, 1], got {f}")));
            }
        }
        let h = support_size(m, d, params.support_fraction);

        let mut candidates: Vec<(f64, usize, Vec<usize>)> = (0..params.num_initial_subsets as u64)
            .into_par_iter()
            .filter_map(|s| {
                let mut rng = rng::substream(params.seed, &[s]);
                let mut rows = initial_subset(&train, h, &mut rng)?;
                let mut det = f64::INFINITY;
                for _ in 0..INITIAL_C_STEPS {
                    let (next, est) = c_step(&train, &rows, h)?;
                    rows = next;
                    det = est.det;
                }
                Some((det, s as usize, rows))
            })
            .collect();
        if candidates.is_empty() {
            let full = Estimate::from_rows(&train, &(0..m).collect::<Vec<_>>());
            return Err(Error::SingularCovariance { det: full.det });
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(REFINED_CANDIDATES);

        let best = candidates
            .into_par_iter()
            .map(|(_, s, mut rows)| {
                let mut est = Estimate::from_rows(&train, &rows);
                for _ in 0..MAX_REFINEMENT_STEPS {
                    let Some((next, next_est)) = c_step(&train, &rows, h) else { break };
                    let converged = next == rows || next_est.det >= est.det;
                    if next_est.det <= est.det {
                        rows = next;
                        est = next_est;
                    }
                    if converged {
                        break;
                    }
                }
                (est, s)
            })
            .min_by(|a, b| a.0.det.total_cmp(&b.0.det).then(a.1.cmp(&b.1)))
            .map(|(est, _)| est)
            .expect("at least one candidate");

        if best.is_singular() {
            return Err(Error::SingularCovariance { det: best.det });
        }
        let precision =
            best.covariance.clone().cholesky().ok_or(Error::SingularCovariance { det: best.det })?.inverse();
        let to_rows = |mat: &DMatrix<f64>| (0..d).map(|a| (0..d).map(|b| mat[(a, b)]).collect()).collect();
        Ok(Self {
            location: best.location.iter().copied().collect(),
            covariance: to_rows(&best.covariance),
            precision: to_rows(&precision),
            support: h,
        })
    }

    /// Builds a model from a known location and covariance.
    pub fn from_estimate(location: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = location.len();
        let cov = DMatrix::from_fn(d, d, |a, b| covariance[a][b]);
        let precision = cov.clone().cholesky().ok_or(Error::SingularCovariance { det: cov.determinant() })?.inverse();
        Ok(Self {
            location,
            covariance,
            precision: (0..d).map(|a| (0..d).map(|b| precision[(a, b)]).collect()).collect(),
            support: 0,
        })
    }

    pub fn determinant(&self) -> f64 {
        let d = self.location.len();
        DMatrix::from_fn(d, d, |a, b| self.covariance[a][b]).determinant()
    }

    /// Mahalanobis distance `sqrt((x - μ)ᵀ Σ⁻¹ (x - μ))`.
    pub fn score(&self, x: &[f64]) -> f64 {
        let d = self.location.len();
        let mut acc = 0.0;
        for a in 0..d {
            let da = x[a] - self.location[a];
            let mut row = 0.0;
            for b in 0..d {
                row += self.precision[a][b] * (x[b] - self.location[b]);
            }
            acc += da * row;
        }
        acc.max(0.0).sqrt()
    }
}
