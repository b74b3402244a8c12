//! Stratified k-fold cross-validation and binary classification metrics.

mod cv;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from;

pub use cv::{
    cross_validate, cross_validate_many, prepare, BalanceStep, CvOutcome, EvalMode, FoldDetail, PipelineOptions,
    Prepared, SelectionStep,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("k must be >= 2 (got {0})")]
    InvalidK(usize),
    #[error("cannot cut {k} folds from {n} rows")]
    TooFewPerClass { n: usize, k: usize },
    #[error("predicted has {predicted} entries, actual has {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Learner(#[from] crate::learners::LearnerError),
    #[error(transparent)]
    Balance(#[from] crate::balance::BalanceError),
    #[error(transparent)]
    Selection(#[from] crate::featsel::SelectionError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Shuffle each class with the seeded generator and deal its rows round-robin
/// into folds. Dealing for class 1 continues at the fold where class 0 stopped,
/// so total fold sizes also differ by at most one.
///
/// A class with fewer than `k` rows leaves some folds without that class.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    if k > labels.len() {
        return Err(EvalError::TooFewPerClass { n: labels.len(), k });
    }
    let mut fold_of = vec![0; labels.len()];
    let mut next = 0;
    for class in 0..2u8 {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rows.shuffle(&mut rng_from(seed, &[0xf01d, u64::from(class)]));
        for r in rows {
            fold_of[r] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

/// Counts with label 1 as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same predictions scored with label 0 as the positive class.
    pub fn flipped(&self) -> Self {
        ConfusionMatrix { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

pub fn confusion(predicted: &[u8], actual: &[u8]) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::LengthMismatch { predicted: predicted.len(), actual: actual.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (1, 1) => cm.tp += 1,
            (1, _) => cm.fp += 1,
            (_, 1) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Positive class (label 1) only.
    #[default]
    Binary,
    /// Unweighted mean of the per-class scores.
    Macro,
}

/// Which metrics hit a 0/0 and were set to 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Undefined {
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

impl Undefined {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub undefined: Undefined,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

fn binary_scores(cm: &ConfusionMatrix) -> (f64, f64, f64, Undefined) {
    let (precision, p_undef) = ratio(cm.tp as f64, (cm.tp + cm.fp) as f64);
    let (recall, r_undef) = ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64);
    let (f1, f_undef) = ratio(2.0 * precision * recall, precision + recall);
    (precision, recall, f1, Undefined { precision: p_undef, recall: r_undef, f1: f_undef })
}

/// Accuracy, precision, recall and F1; every 0/0 evaluates to 0.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    metrics_with(cm, Averaging::Binary)
}

pub fn metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Metrics {
    let (accuracy, _) = ratio((cm.tp + cm.tn) as f64, cm.total() as f64);
    match averaging {
        Averaging::Binary => {
            let (precision, recall, f1, undefined) = binary_scores(cm);
            Metrics { accuracy, precision, recall, f1, undefined }
        }
        Averaging::Macro => {
            let (p1, r1, f1, u1) = binary_scores(cm);
            let (p0, r0, f0, u0) = binary_scores(&cm.flipped());
            Metrics {
                accuracy,
                precision: (p0 + p1) / 2.0,
                recall: (r0 + r1) / 2.0,
                f1: (f0 + f1) / 2.0,
                undefined: Undefined {
                    precision: u0.precision || u1.precision,
                    recall: u0.recall || u1.recall,
                    f1: u0.f1 || u1.f1,
                },
            }
        }
    }
}

/// Per-fold metrics and their unweighted means.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_fold: Vec<Metrics>,
    /// Number of folds where each metric hit 0/0.
    pub undefined_folds: UndefinedCounts,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct UndefinedCounts {
    pub precision: usize,
    pub recall: usize,
    pub f1: usize,
}

impl MetricsReport {
    pub fn from_folds(per_fold: Vec<Metrics>) -> Self {
        let n = per_fold.len().max(1) as f64;
        let mean = |f: fn(&Metrics) -> f64| per_fold.iter().map(f).sum::<f64>() / n;
        let mut undefined_folds = UndefinedCounts::default();
        for m in &per_fold {
            undefined_folds.precision += usize::from(m.undefined.precision);
            undefined_folds.recall += usize::from(m.undefined.recall);
            undefined_folds.f1 += usize::from(m.undefined.f1);
        }
        MetricsReport {
            accuracy: mean(|m| m.accuracy),
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
            per_fold,
            undefined_folds,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn per_fold_counts(a: &FoldAssignment, labels: &[u8], class: u8) -> Vec<usize> {
        let mut c = vec![0; a.k];
        for (i, &f) in a.fold_of.iter().enumerate() {
            if labels[i] == class {
                c[f] += 1;
            }
        }
        c
    }

    #[test]
    fn exact_divisibility() {
        let labels: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let a = stratified_kfold(&labels, 5, 1).unwrap();
        assert_eq!(per_fold_counts(&a, &labels, 1), vec![2; 5]);
        assert_eq!(per_fold_counts(&a, &labels, 0), vec![2; 5]);
    }

    #[test]
    fn reference_class_counts_divide_evenly() {
        let labels: Vec<u8> = (0..100_000).map(|i| u8::from(i % 100_000 < 9340)).collect();
        let a = stratified_kfold(&labels, 10, 77).unwrap();
        assert_eq!(per_fold_counts(&a, &labels, 1), vec![934; 10]);
        assert_eq!(per_fold_counts(&a, &labels, 0), vec![9066; 10]);
    }

    #[test]
    fn remainder_distribution() {
        let labels = vec![1u8; 7];
        let a = stratified_kfold(&labels, 3, 5).unwrap();
        let mut c = per_fold_counts(&a, &labels, 1);
        c.sort_unstable();
        assert_eq!(c, vec![2, 2, 3]);
    }

    #[test]
    fn fold_errors_and_determinism() {
        assert_eq!(stratified_kfold(&[0, 1], 1, 0).unwrap_err(), EvalError::InvalidK(1));
        assert!(matches!(stratified_kfold(&[0, 1], 3, 0), Err(EvalError::TooFewPerClass { .. })));
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        assert_eq!(stratified_kfold(&labels, 4, 9).unwrap(), stratified_kfold(&labels, 4, 9).unwrap());
        assert_ne!(stratified_kfold(&labels, 4, 9).unwrap(), stratified_kfold(&labels, 4, 10).unwrap());
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[1, 0, 1], &[1, 0, 1]).unwrap(),
            ConfusionMatrix { tp: 2, fp: 0, fn_: 0, tn: 1 }
        );
        assert_eq!(
            confusion(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0], &[1, 0, 0, 1, 0, 0, 0, 0, 0, 0]).unwrap(),
            ConfusionMatrix { tp: 1, fp: 2, fn_: 1, tn: 6 }
        );
        assert_eq!(confusion(&[0; 4], &[1; 4]).unwrap(), ConfusionMatrix { tp: 0, fp: 0, fn_: 4, tn: 0 });
        assert!(matches!(confusion(&[0], &[0, 1]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn metric_examples() {
        let m = metrics(&ConfusionMatrix { tp: 2, fp: 1, fn_: 1, tn: 6 });
        assert!((m.accuracy - 0.8).abs() < 1e-15);
        for v in [m.precision, m.recall, m.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
        let m = metrics(&ConfusionMatrix { tp: 5, fp: 0, fn_: 0, tn: 5 });
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        let m = metrics(&ConfusionMatrix { tp: 0, fp: 0, fn_: 3, tn: 7 });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        assert!(m.undefined.precision && m.undefined.f1 && !m.undefined.recall);
    }

    #[test]
    fn macro_averaging_mixes_both_classes() {
        let cm = ConfusionMatrix { tp: 2, fp: 1, fn_: 1, tn: 6 };
        let m = metrics_with(&cm, Averaging::Macro);
        // Class 0: precision 6/7, recall 6/7.
        assert!((m.precision - (2.0 / 3.0 + 6.0 / 7.0) / 2.0).abs() < 1e-15);
        assert!((m.recall - (2.0 / 3.0 + 6.0 / 7.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn report_means() {
        let a = metrics(&ConfusionMatrix { tp: 1, fp: 0, fn_: 0, tn: 1 });
        let b = metrics(&ConfusionMatrix { tp: 0, fp: 0, fn_: 1, tn: 1 });
        let r = MetricsReport::from_folds(vec![a, b]);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.recall, 0.5);
        assert_eq!(r.undefined_folds.precision, 1);
    }
}
