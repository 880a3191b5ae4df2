use serde::{Deserialize, Serialize};

use crate::corpus::Polarity;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: Polarity,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Scores of one prediction set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[gold][predicted]`.
    pub confusion: [[usize; 3]; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, per-class precision/recall/F1 and their unweighted mean.
/// Undefined ratios count as 0, so a class absent from both gold and
/// predictions contributes F1 = 0.
pub fn score(gold: &[usize], predicted: &[usize]) -> Metrics {
    assert_eq!(gold.len(), predicted.len(), "gold and predictions differ in length");
    let mut confusion = [[0usize; 3]; 3];
    for (&g, &p) in gold.iter().zip(predicted) {
        confusion[g][p] += 1;
    }
    let total = gold.len();
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = Polarity::ALL
        .iter()
        .map(|&class| {
            let c = class.index();
            let tp = confusion[c][c];
            let gold_c: usize = confusion[c].iter().sum();
            let pred_c: usize = (0..3).map(|g| confusion[g][c]).sum();
            let precision = ratio(tp, pred_c);
            let recall = ratio(tp, gold_c);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class,
                precision,
                recall,
                f1,
                support: gold_c,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / 3.0;
    Metrics {
        total,
        accuracy: ratio(correct, total),
        macro_f1,
        per_class,
        confusion,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_fixture() {
        let m = score(&[0, 0, 2, 1], &[0, 2, 2, 1]);
        assert_eq!(m.accuracy, 0.75);
        assert!((m.macro_f1 - 7.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_constant() {
        let m = score(&[0, 1, 2], &[0, 1, 2]);
        assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
        let m = score(&[0, 1, 2], &[1, 1, 1]);
        assert!(m.per_class[1].f1 > 0.0);
        assert_eq!(m.per_class[0].f1, 0.0);
        assert_eq!(m.per_class[2].f1, 0.0);
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_total(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
            let (g, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = score(&g, &p);
            let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
            let sum: usize = m.confusion.iter().flatten().sum();
            prop_assert_eq!(sum, g.len());
            prop_assert_eq!(m.accuracy, trace as f64 / g.len() as f64);
            prop_assert!((0.0..=1.0).contains(&m.macro_f1));
        }
    }
}
