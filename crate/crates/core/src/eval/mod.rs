//! Detection metrics and k-fold cross-validation.
//!
//! The positive class is the attack: a true positive is an attack slot
//! flagged as an outlier, a false positive is a genuine PU slot flagged as
//! one.

pub mod experiment;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{Dataset, Label};
use crate::oneclass::{Detector, DetectorKind, DetectorParams};
use crate::rng;

pub use experiment::{run_experiment, CellCoord, ExperimentReport, ExperimentRow};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, is_outlier: bool, label: Label) {
        match (label, is_outlier) {
            (Label::Attack, true) => self.tp += 1,
            (Label::Pu, true) => self.fp += 1,
            (Label::Pu, false) => self.tn += 1,
            (Label::Attack, false) => self.fn_ += 1,
        }
    }
}

/// Accuracy, precision, recall and F1 as fractions in `[0, 1]`.
///
/// A metric whose denominator is zero is reported as 0 with its
/// `*_undefined` flag set.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

impl MetricsReport {
    pub fn any_undefined(&self) -> bool {
        self.precision_undefined || self.recall_undefined || self.f1_undefined
    }
}

pub fn confusion(is_outlier: &[bool], labels: &[Label]) -> Result<ConfusionMatrix> {
    if is_outlier.len() != labels.len() {
        return Err(Error::LengthMismatch { left: is_outlier.len(), right: labels.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (&o, &l) in is_outlier.iter().zip(labels) {
        cm.add(o, l);
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::Empty("confusion matrix has no examples"));
    }
    let accuracy = (cm.tp + cm.tn) as f64 / n as f64;
    let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, f1_undefined) =
        if precision + recall > 0.0 { (2.0 * precision * recall / (precision + recall), false) } else { (0.0, true) };
    Ok(MetricsReport { accuracy, precision, recall, f1, precision_undefined, recall_undefined, f1_undefined })
}

/// Fits `kind` on the PU rows of `train` and scores every row of `test`.
pub fn holdout(train: &Dataset, test: &Dataset, kind: DetectorKind, params: &DetectorParams) -> Result<MetricsReport> {
    let pu: Vec<usize> = (0..train.len()).filter(|&i| train.examples[i].label == Label::Pu).collect();
    if pu.is_empty() {
        return Err(Error::Empty("training set has no PU (+1) examples"));
    }
    let det = Detector::fit(kind, train.select_features(&pu).view(), params)?;
    evaluate(&det, test)
}

/// Metrics of a calibrated detector on a labelled dataset.
pub fn evaluate(det: &Detector, test: &Dataset) -> Result<MetricsReport> {
    test.require_non_empty()?;
    let predictions = det.predict_batch(test.feature_matrix().view())?;
    let flags: Vec<bool> = predictions.iter().map(|p| p.is_outlier).collect();
    metrics(&confusion(&flags, &test.labels())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub k: usize,
    pub per_fold: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

/// Shuffled fold assignment: fold sizes differ by at most one, the first
/// `len % k` folds taking the extra row.
pub fn fold_indices(len: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::seeded(seed));
    let base = len / k;
    let extra = len % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    folds
}

/// k-fold cross-validation of a one-class detector.
///
/// Each fold is held out once; the detector is refitted on the PU rows of
/// the remaining folds, calibrated on them, and evaluated on the held-out
/// fold (both labels).
pub fn kfold_cv(ds: &Dataset, k: usize, kind: DetectorKind, params: &DetectorParams, seed: u64) -> Result<CvReport> {
    ds.require_non_empty()?;
    if k < 2 || k >= ds.len() {
        return Err(Error::param("k", format!("need 2 <= k < {} (dataset size), got {k}", ds.len())));
    }
    if ds.count(Label::Pu) == 0 || ds.count(Label::Attack) == 0 {
        return Err(Error::param("dataset", "cross-validation needs both +1 and -1 examples"));
    }
    let folds = fold_indices(ds.len(), k, seed);
    let per_fold = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, idx)| idx.iter().copied())
                .filter(|&i| ds.examples[i].label == Label::Pu)
                .collect();
            if train.is_empty() {
                return Err(Error::Empty("training folds contain no PU (+1) examples").in_cell(format!("fold {f}")));
            }
            let det = Detector::fit(kind, ds.select_features(&train).view(), params)?;
            let test = Dataset::new(folds[f].iter().map(|&i| ds.examples[i]).collect());
            evaluate(&det, &test)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_metrics(&per_fold);
    Ok(CvReport { k, per_fold, mean })
}

/// Field-wise arithmetic mean; a flag is set if it is set in any input.
pub fn mean_metrics(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricsReport {
        accuracy: avg(|m| m.accuracy),
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        precision_undefined: reports.iter().any(|m| m.precision_undefined),
        recall_undefined: reports.iter().any(|m| m.recall_undefined),
        f1_undefined: reports.iter().any(|m| m.f1_undefined),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Example, FeatureVector};
    use proptest::prelude::*;

    #[test]
    fn confusion_cells() {
        assert_eq!(confusion(&[true], &[Label::Attack]).unwrap().tp, 1);
        assert_eq!(confusion(&[true], &[Label::Pu]).unwrap().fp, 1);
        assert_eq!(confusion(&[false], &[Label::Attack]).unwrap().fn_, 1);
        assert_eq!(confusion(&[false], &[Label::Pu]).unwrap().tn, 1);
        assert!(confusion(&[true, false], &[Label::Pu]).is_err());
    }

    #[test]
    fn metrics_worked_example() {
        let m = metrics(&ConfusionMatrix { tp: 9, fp: 1, tn: 89, fn_: 1 }).unwrap();
        assert!((m.accuracy - 0.98).abs() < 1e-12);
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.f1 - 0.9).abs() < 1e-12);
        assert!(!m.any_undefined());
    }

    #[test]
    fn metrics_degenerate_cases() {
        let m = metrics(&ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 2 }).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.precision_undefined);
        assert!(m.f1_undefined);
        let perfect = metrics(&ConfusionMatrix { tp: 7, ..Default::default() }).unwrap();
        assert_eq!((perfect.accuracy, perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn folds_partition_the_dataset() {
        for (len, k) in [(10, 3), (11000, 20), (4, 2), (7, 7)] {
            let folds = fold_indices(len, k, 9);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..len).collect::<Vec<_>>());
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    fn toy(n_pu: usize, n_attack: usize) -> Dataset {
        let mk = |i: usize, v: f64, label| Example {
            slot_id: i as u64,
            features: FeatureVector::from_array([v + 0.01 * i as f64, (i % 7) as f64, v, v + 1.0, v - 1.0]),
            label,
        };
        let mut ex: Vec<Example> = (0..n_pu).map(|i| mk(i, (i % 5) as f64, Label::Pu)).collect();
        ex.extend((0..n_attack).map(|i| mk(i, 100.0 + i as f64, Label::Attack)));
        Dataset::new(ex)
    }

    #[test]
    fn cv_rejects_bad_k_and_single_class() {
        let ds = toy(20, 4);
        let p = DetectorParams::default();
        assert!(kfold_cv(&ds, 1, DetectorKind::Lof, &p, 0).is_err());
        assert!(kfold_cv(&ds, ds.len(), DetectorKind::Lof, &p, 0).is_err());
        assert!(kfold_cv(&toy(20, 0), 2, DetectorKind::Lof, &p, 0).is_err());
    }

    #[test]
    fn cv_mean_is_mean_of_folds() {
        let ds = toy(200, 20);
        let p = DetectorParams {
            contamination: 0.05,
            lof: crate::oneclass::LofParams { k_neighbors: 5 },
            ..Default::default()
        };
        let r = kfold_cv(&ds, 5, DetectorKind::Lof, &p, 3).unwrap();
        assert_eq!(r.per_fold.len(), 5);
        let acc = r.per_fold.iter().map(|m| m.accuracy).sum::<f64>() / 5.0;
        assert!((r.mean.accuracy - acc).abs() < 1e-12);
        assert!(r.per_fold.iter().filter(|m| !m.recall_undefined).all(|m| m.recall == 1.0));
        assert_eq!(r, kfold_cv(&ds, 5, DetectorKind::Lof, &p, 3).unwrap());
    }

    proptest! {
        #[test]
        fn metric_identities(tp in 0u64..1000, fp in 0u64..1000, tn in 0u64..1000, fn_ in 0u64..1000) {
            let cm = ConfusionMatrix { tp, fp, tn, fn_ };
            prop_assume!(cm.total() > 0);
            let m = metrics(&cm).unwrap();
            let n = (tp + fp + tn + fn_) as f64;
            prop_assert!((m.accuracy - (tp + tn) as f64 / n).abs() <= 1e-12);
            if tp + fp > 0 { prop_assert!((m.precision - tp as f64 / (tp + fp) as f64).abs() <= 1e-12); }
            if tp + fn_ > 0 { prop_assert!((m.recall - tp as f64 / (tp + fn_) as f64).abs() <= 1e-12); }
            if m.precision + m.recall > 0.0 {
                let h = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
                prop_assert!((m.f1 - h).abs() <= 1e-12);
            }
        }
    }
}
