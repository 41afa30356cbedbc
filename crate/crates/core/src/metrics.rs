//! Label quality against ground truth.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Hamming distance between prediction and ground truth.
    pub n_errors: usize,
    pub recall: f64,
    pub precision: f64,
    pub fscore: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Ground truth has no inliers; recall is reported as 0.
    pub recall_undefined: bool,
    /// Prediction has no inliers; precision is reported as 0.
    pub precision_undefined: bool,
}

pub fn fscore(recall: f64, precision: f64) -> f64 {
    let s = recall + precision;
    if s > 0.0 {
        2.0 * recall * precision / s
    } else {
        0.0
    }
}

pub fn compute_metrics(pred: &[bool], gt: &[bool]) -> Result<Metrics> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            gt.len()
        )));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let ratio = |num: usize, den: usize| if den > 0 { num as f64 / den as f64 } else { 0.0 };
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    Ok(Metrics {
        n_errors: fp + fn_,
        recall,
        precision,
        fscore: fscore(recall, precision),
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        recall_undefined: tp + fn_ == 0,
        precision_undefined: tp + fp == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fscore_of_table_case() {
        let f = fscore(0.99, 0.94);
        assert!((f - 0.96).abs() < 5e-3, "{f}");
        assert!((f - 2.0 * 0.99 * 0.94 / 1.93).abs() < 1e-15);
        assert_eq!(fscore(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_prediction() {
        let gt = [true, false, true, true];
        let m = compute_metrics(&gt, &gt).unwrap();
        assert_eq!(m.n_errors, 0);
        assert_eq!(m.fscore, 1.0);
    }

    #[test]
    fn all_inlier_prediction_on_half_inliers() {
        let gt: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
        let m = compute_metrics(&[true; 100], &gt).unwrap();
        assert_eq!(m.n_errors, 50);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn undefined_ratios_are_flagged() {
        let m = compute_metrics(&[false, true], &[false, false]).unwrap();
        assert!(m.recall_undefined && !m.precision_undefined);
        assert_eq!(m.recall, 0.0);
        let m = compute_metrics(&[false, false], &[true, false]).unwrap();
        assert!(m.precision_undefined);
        assert_eq!(m.fscore, 0.0);
        assert!(compute_metrics(&[true], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(bool, bool)]| -> (Vec<bool>, Vec<bool>) { v.iter().copied().unzip() };
            let (p1, g1) = split(&pairs);
            let (p2, g2) = split(&shuffled);
            prop_assert_eq!(compute_metrics(&p1, &g1).unwrap(), compute_metrics(&p2, &g2).unwrap());
        }
    }
}
