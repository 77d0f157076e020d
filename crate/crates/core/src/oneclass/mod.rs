//! One-class (novelty) detectors trained on primary-user examples only.
//!
//! All four detectors share one convention: a higher score means more
//! anomalous. A fitted [`Detector`] flags `x` as an outlier when its score is
//! strictly above a threshold taken as the `1 - contamination` quantile of the
//! training scores.

pub mod iforest;
pub mod lof;
pub mod mcd;
mod model_io;
pub mod ocsvm;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::quantile;

pub use iforest::{IsolationForest, IsolationForestParams};
pub use lof::{Lof, LofParams};
pub use mcd::{Mcd, McdParams};
pub use model_io::{read_model, read_model_from, write_model, write_model_to, MODEL_FORMAT_VERSION};
pub use ocsvm::{Gamma, OcsvmParams, OneClassSvm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    IsolationForest,
    OneClassSvm,
    Mcd,
    Lof,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] =
        [DetectorKind::IsolationForest, DetectorKind::OneClassSvm, DetectorKind::Mcd, DetectorKind::Lof];

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self {
            DetectorKind::IsolationForest => "IF",
            DetectorKind::OneClassSvm => "SVM",
            DetectorKind::Mcd => "MCD",
            DetectorKind::Lof => "LOF",
        }
    }

    /// Tag used in model files.
    pub fn tag(&self) -> &'static str {
        match self {
            DetectorKind::IsolationForest => "iforest",
            DetectorKind::OneClassSvm => "ocsvm",
            DetectorKind::Mcd => "mcd",
            DetectorKind::Lof => "lof",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "if" | "iforest" | "isolation_forest" | "isolation-forest" => Ok(DetectorKind::IsolationForest),
            "svm" | "ocsvm" | "one_class_svm" | "one-class-svm" => Ok(DetectorKind::OneClassSvm),
            "mcd" => Ok(DetectorKind::Mcd),
            "lof" => Ok(DetectorKind::Lof),
            other => {
                Err(Error::param("detector", format!("unknown detector `{other}` (expected if, svm, mcd or lof)")))
            }
        }
    }
}

/// Hyper-parameters for every detector kind plus the shared contamination.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub contamination: f64,
    pub iforest: IsolationForestParams,
    pub ocsvm: OcsvmParams,
    pub mcd: McdParams,
    pub lof: LofParams,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            contamination: 0.05,
            iforest: IsolationForestParams::default(),
            ocsvm: OcsvmParams::default(),
            mcd: McdParams::default(),
            lof: LofParams::default(),
        }
    }
}

impl DetectorParams {
    /// Copy with every seeded component re-keyed to `seed`.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut p = self.clone();
        p.iforest.seed = seed;
        p.mcd.seed = seed;
        p
    }

    pub fn validate(&self) -> Result<()> {
        validate_contamination(self.contamination)?;
        if self.iforest.num_trees == 0 || self.iforest.subsample_size < 2 {
            return Err(Error::param("iforest", "need at least one tree and a subsample of 2"));
        }
        if !(self.ocsvm.nu > 0.0 && self.ocsvm.nu <= 1.0) {
            return Err(Error::param("nu", format!("must lie in (0, 1], got {}", self.ocsvm.nu)));
        }
        if !(self.ocsvm.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if self.mcd.num_initial_subsets == 0 {
            return Err(Error::param("num_initial_subsets", "must be positive"));
        }
        if self.lof.k_neighbors == 0 {
            return Err(Error::param("k_neighbors", "must be positive"));
        }
        Ok(())
    }
}

fn validate_contamination(c: f64) -> Result<()> {
    if c > 0.0 && c < 0.5 {
        Ok(())
    } else {
        Err(Error::param("contamination", format!("must lie in (0, 0.5), got {c}")))
    }
}

/// Fitted state of one of the four detectors.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    IsolationForest(IsolationForest),
    OneClassSvm(OneClassSvm),
    Mcd(Mcd),
    Lof(Lof),
}

impl Model {
    pub fn kind(&self) -> DetectorKind {
        match self {
            Model::IsolationForest(_) => DetectorKind::IsolationForest,
            Model::OneClassSvm(_) => DetectorKind::OneClassSvm,
            Model::Mcd(_) => DetectorKind::Mcd,
            Model::Lof(_) => DetectorKind::Lof,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Model::IsolationForest(m) => m.dim,
            Model::OneClassSvm(m) => m.dim,
            Model::Mcd(m) => m.location.len(),
            Model::Lof(m) => m.points.first().map_or(0, Vec::len),
        }
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            Model::IsolationForest(m) => m.score(x),
            Model::OneClassSvm(m) => m.score(x),
            Model::Mcd(m) => m.score(x),
            Model::Lof(m) => m.score(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub is_outlier: bool,
}

/// A fitted model with its decision threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub model: Model,
    pub threshold: Option<f64>,
}

/// Threshold at the `1 - contamination` quantile of the training scores.
pub fn calibrate_threshold(train_scores: &[f64], contamination: f64) -> Result<f64> {
    validate_contamination(contamination)?;
    quantile(train_scores, 1.0 - contamination)
}

impl Detector {
    /// Fits `kind` on `train` and returns the uncalibrated detector together
    /// with the training-set scores used for calibration.
    ///
    /// LOF training scores exclude each point from its own neighbourhood; the
    /// other detectors score the training rows directly.
    pub fn fit_uncalibrated(
        kind: DetectorKind,
        train: ArrayView2<f64>,
        params: &DetectorParams,
    ) -> Result<(Self, Vec<f64>)> {
        if train.nrows() == 0 {
            return Err(Error::Empty("training set has no rows"));
        }
        if train.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("train", "contains non-finite values"));
        }
        let train = train.as_standard_layout();
        let view = train.view();
        let model = match kind {
            DetectorKind::IsolationForest => Model::IsolationForest(IsolationForest::fit(view, &params.iforest)?),
            DetectorKind::OneClassSvm => Model::OneClassSvm(OneClassSvm::fit(view, &params.ocsvm)?),
            DetectorKind::Mcd => Model::Mcd(Mcd::fit(view, &params.mcd)?),
            DetectorKind::Lof => {
                let (lof, scores) = Lof::fit_with_scores(view, &params.lof)?;
                return Ok((Self { model: Model::Lof(lof), threshold: None }, scores));
            }
        };
        let scores = (0..view.nrows())
            .into_par_iter()
            .map(|i| model.score(view.row(i).as_slice().expect("standard layout")))
            .collect();
        Ok((Self { model, threshold: None }, scores))
    }

    /// Fits and calibrates with `params.contamination`.
    pub fn fit(kind: DetectorKind, train: ArrayView2<f64>, params: &DetectorParams) -> Result<Self> {
        let (mut det, scores) = Self::fit_uncalibrated(kind, train, params)?;
        det.calibrate(&scores, params.contamination)?;
        Ok(det)
    }

    pub fn calibrate(&mut self, train_scores: &[f64], contamination: f64) -> Result<f64> {
        let t = calibrate_threshold(train_scores, contamination)?;
        self.threshold = Some(t);
        Ok(t)
    }

    pub fn kind(&self) -> DetectorKind {
        self.model.kind()
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(())
    }

    /// Anomaly score; higher is more anomalous.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.model.score(x))
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let threshold = self.threshold.ok_or(Error::Uncalibrated)?;
        let score = self.score(x)?;
        Ok(Prediction { score, is_outlier: score > threshold })
    }

    /// Predictions for every row of `xs`, in row order.
    pub fn predict_batch(&self, xs: ArrayView2<f64>) -> Result<Vec<Prediction>> {
        if xs.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: xs.ncols() });
        }
        let xs = xs.as_standard_layout();
        (0..xs.nrows()).into_par_iter().map(|i| self.predict(xs.row(i).as_slice().expect("standard layout"))).collect()
    }
}
