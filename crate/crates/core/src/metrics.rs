//! Confusion counts and the classification metrics derived from them.
//!
//! Ratios with an empty denominator are `None` rather than NaN. F1 is always
//! defined: it is computed as `2tp / (2tp + fp + fn)` and is 0 whenever
//! `tp == 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {predictions} predictions vs {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no instances to score")]
    Empty,
    #[error("non-binary value {value} at index {index}")]
    NonBinary { index: usize, value: u8 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Tallies predictions against labels.
pub fn confusion(predictions: &[u8], labels: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (index, (&p, &y)) in predictions.iter().zip(labels).enumerate() {
        match (p, y) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 0) => c.tn += 1,
            (0, 1) => c.fn_ += 1,
            _ => {
                return Err(MetricsError::NonBinary {
                    index,
                    value: if p > 1 { p } else { y },
                })
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub counts: ConfusionCounts,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Metrics {
    /// Panics on an all-zero confusion; callers always score at least one note.
    pub fn from_counts(c: ConfusionCounts) -> Self {
        assert!(c.total() > 0, "metrics need at least one scored instance");
        let f1_den = 2 * c.tp + c.fp + c.fn_;
        let f1 = if c.tp == 0 { 0.0 } else { (2 * c.tp) as f64 / f1_den as f64 };
        Self {
            counts: c,
            sensitivity: ratio(c.tp, c.tp + c.fn_),
            specificity: ratio(c.tn, c.tn + c.fp),
            precision: ratio(c.tp, c.tp + c.fp),
            f1,
            accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        }
    }
}

pub fn metrics_from_counts(c: ConfusionCounts) -> Metrics {
    Metrics::from_counts(c)
}

/// Predictions + labels straight to metrics.
pub fn score(predictions: &[u8], labels: &[u8]) -> Result<Metrics, MetricsError> {
    confusion(predictions, labels).map(Metrics::from_counts)
}

/// Accuracy masking: zero detections while accuracy sits at the
/// constant-negative level for this prevalence (within 0.02).
pub fn masking_flag(m: &Metrics, prevalence: f64) -> bool {
    let blind = match m.sensitivity {
        Some(s) => s == 0.0,
        None => m.counts.positives() > 0,
    };
    blind && m.accuracy >= 1.0 - prevalence - MASKING_TOLERANCE
}

pub const MASKING_TOLERANCE: f64 = 0.02;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[0, 0], &[0, 0]).unwrap(), ConfusionCounts::new(0, 0, 2, 0));
        assert_eq!(confusion(&[1, 0, 1], &[1, 1, 0]).unwrap(), ConfusionCounts::new(1, 1, 0, 1));
        let mut labels = vec![0u8; 200];
        labels[..6].fill(1);
        assert_eq!(confusion(&[1; 200], &labels).unwrap(), ConfusionCounts::new(6, 194, 0, 0));
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(
            confusion(&[1], &[1, 0]),
            Err(MetricsError::LengthMismatch { predictions: 1, labels: 2 })
        );
        assert_eq!(confusion(&[], &[]), Err(MetricsError::Empty));
        assert!(matches!(confusion(&[2], &[0]), Err(MetricsError::NonBinary { index: 0, value: 2 })));
    }

    #[test]
    fn all_positive_lexicon_row() {
        let m = metrics_from_counts(ConfusionCounts::new(6, 194, 0, 0));
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(0.0));
        assert_eq!(m.f1, 12.0 / 206.0);
        assert!((m.f1 - 0.058).abs() < 0.001);
    }

    #[test]
    fn all_negative_masks() {
        let m = metrics_from_counts(ConfusionCounts::new(0, 0, 194, 6));
        assert_eq!(m.accuracy, 0.97);
        assert_eq!(m.sensitivity, Some(0.0));
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.precision, None);
        assert!(masking_flag(&m, 0.03));
    }

    #[test]
    fn perfect_classifier() {
        let m = metrics_from_counts(ConfusionCounts::new(5, 0, 5, 0));
        assert_eq!((m.sensitivity, m.specificity, m.f1, m.accuracy), (Some(1.0), Some(1.0), 1.0, 1.0));
    }

    #[test]
    fn undefined_ratios() {
        let m = metrics_from_counts(ConfusionCounts::new(0, 0, 4, 0));
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.precision, None);
        assert_eq!(m.f1, 0.0);
        // No positives present: nothing is being masked.
        assert!(!masking_flag(&m, 0.0));
    }

    #[test]
    fn masking_examples() {
        let blind = metrics_from_counts(ConfusionCounts::new(0, 0, 194, 6));
        assert!(masking_flag(&blind, 0.03));
        let seeing = metrics_from_counts(ConfusionCounts::new(6, 6, 188, 0));
        assert_eq!(seeing.accuracy, 0.97);
        assert!(!masking_flag(&seeing, 0.03));
        let coin = metrics_from_counts(ConfusionCounts::new(0, 97, 97, 6));
        assert!((coin.accuracy - 0.485).abs() < 1e-12);
        assert!(!masking_flag(&coin, 0.03));
    }

    #[test]
    fn f1_matches_harmonic_mean_when_defined() {
        let m = metrics_from_counts(ConfusionCounts::new(3, 2, 10, 4));
        let (p, r) = (m.precision.unwrap(), m.sensitivity.unwrap());
        assert!((m.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn f1_ignores_true_negatives(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, tn in 0usize..500, tn2 in 0usize..500) {
            proptest::prop_assume!(tp + fp + fn_ + tn.min(tn2) > 0);
            let a = metrics_from_counts(ConfusionCounts::new(tp, fp, tn, fn_));
            let b = metrics_from_counts(ConfusionCounts::new(tp, fp, tn2, fn_));
            proptest::prop_assert_eq!(a.f1, b.f1);
        }

        #[test]
        fn defined_values_in_unit_interval(tp in 0usize..50, fp in 0usize..50, tn in 0usize..50, fn_ in 0usize..50) {
            proptest::prop_assume!(tp + fp + tn + fn_ > 0);
            let m = metrics_from_counts(ConfusionCounts::new(tp, fp, tn, fn_));
            for v in [m.sensitivity, m.specificity, m.precision, Some(m.f1), Some(m.accuracy)].into_iter().flatten() {
                proptest::prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn constant_negative_accuracy_is_one_minus_prevalence(labels in proptest::collection::vec(0u8..2, 1..300)) {
            let preds = vec![0u8; labels.len()];
            let m = score(&preds, &labels).unwrap();
            let p = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64;
            proptest::prop_assert!((m.accuracy - (1.0 - p)).abs() < 1e-12);
        }
    }
}
