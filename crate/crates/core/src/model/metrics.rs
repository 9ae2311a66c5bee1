use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification quality of a set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub maf1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Accuracy, per-class precision/recall/F1 and macro F1. Macro F1 averages
/// over the classes present in `truth`; a class with no true and no predicted
/// positives scores 0.
pub fn metrics_from_predictions(preds: &[usize], truth: &[usize], class_count: usize) -> Result<MetricsReport> {
    if preds.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", preds.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::Domain("no predictions to score".into()));
    }
    let mut confusion = vec![vec![0usize; class_count]; class_count];
    for (&p, &t) in preds.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::Index(format!("class {} outside 0..{class_count}", p.max(t))));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..class_count).map(|c| confusion[c][c]).sum();
    let mut precision = vec![0.0; class_count];
    let mut recall = vec![0.0; class_count];
    let mut f1 = vec![0.0; class_count];
    let mut present = Vec::new();
    for c in 0..class_count {
        let tp = confusion[c][c] as f64;
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        if predicted > 0 {
            precision[c] = tp / predicted as f64;
        }
        if actual > 0 {
            recall[c] = tp / actual as f64;
            present.push(c);
        }
        let pr = precision[c] + recall[c];
        if pr > 0.0 {
            f1[c] = 2.0 * precision[c] * recall[c] / pr;
        }
    }
    let maf1 = present.iter().map(|&c| f1[c]).sum::<f64>() / present.len() as f64;
    Ok(MetricsReport {
        acc: correct as f64 / truth.len() as f64,
        maf1,
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_example() {
        let r = metrics_from_predictions(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((r.acc - 2.0 / 3.0).abs() < 1e-12);
        for f in &r.per_class_f1 {
            assert!((f - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!((r.maf1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let r = metrics_from_predictions(&[2, 0, 1], &[2, 0, 1], 3).unwrap();
        assert_eq!((r.acc, r.maf1), (1.0, 1.0));
        let r = metrics_from_predictions(&[1, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.acc, 0.5);
        assert_eq!(r.per_class_f1[0], 0.0);
    }

    #[test]
    fn absent_classes_do_not_dilute_macro_f1() {
        let r = metrics_from_predictions(&[0, 1], &[0, 1], 4).unwrap();
        assert_eq!(r.maf1, 1.0);
        assert_eq!(r.total(), 2);
    }

    #[test]
    fn errors() {
        assert!(matches!(metrics_from_predictions(&[], &[], 2), Err(Error::Domain(_))));
        assert!(matches!(metrics_from_predictions(&[0], &[0, 1], 2), Err(Error::Shape(_))));
        assert!(matches!(metrics_from_predictions(&[2], &[0], 2), Err(Error::Index(_))));
    }
}
