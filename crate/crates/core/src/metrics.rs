//! Selection, refurbishment and transition-estimation diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::prob::{CorruptionMatrix, NoisyDataset};

/// Per-cycle record; one JSON object per line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub gamma: f64,
    /// `None` when every training sample is clean (or every one corrupted).
    pub selection_auc: Option<f64>,
    /// Needs true labels on the training split.
    pub refurb_acc: Option<f64>,
    /// Needs a test split.
    pub test_acc: Option<f64>,
    /// Estimated `T_c` against the ground-truth `T`; absent without the
    /// auxiliary cycle or without true labels.
    pub t_row_l1: Option<f64>,
    /// Estimated `T` against the ground-truth `T`.
    pub t_full_row_l1: Option<f64>,
    /// Estimated `T_c` against the transitions of the corrupted samples
    /// alone, over the classes that have any.
    pub tc_corrupted_row_l1: Option<f64>,
    pub mix_ll: f64,
    pub m_step_objective: f64,
    pub mean_clean_prob: f64,
    pub eps_min: f64,
    pub eps_mean: f64,
    pub eps_max: f64,
    pub main_loss: f64,
    pub aux_loss: Option<f64>,
}

/// ROC AUC of `scores` for separating `positive` from the rest, from average
/// ranks (ties count one half). `None` if either group is empty.
pub fn selection_auc(scores: &[f64], positive: &[bool]) -> Result<Option<f64>> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("AUC score".into()));
    }
    let n_pos = positive.iter().filter(|p| **p).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        pos_rank_sum += avg * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    let u = pos_rank_sum - np * (np + 1.0) / 2.0;
    Ok(Some(u / (np * nn)))
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / pred.len() as f64
}

/// Fraction of training samples where the raw argmax of `f` is the true class.
pub fn refurbishment_accuracy(f: &Classifier, data: &NoisyDataset) -> Result<f64> {
    let truth = data.true_labels().ok_or(Error::MissingTrueLabels)?;
    Ok(accuracy(&f.predict(data.features())?, truth))
}

/// Top-1 accuracy on a test split, scored against its true labels when
/// present and its labels otherwise.
pub fn test_accuracy(f: &Classifier, test: &NoisyDataset) -> Result<f64> {
    let truth = test.true_labels().unwrap_or(test.noisy_labels());
    Ok(accuracy(&f.predict(test.features())?, truth))
}

/// Mean row-wise L1 distance.
pub fn t_estimation_error(est: &CorruptionMatrix, truth: &CorruptionMatrix) -> Result<f64> {
    let k = truth.num_classes();
    if est.num_classes() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: est.num_classes(),
        });
    }
    let total: f64 = est
        .entries()
        .iter()
        .zip(truth.entries().iter())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(total / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(s: &[f64], pos: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if pos[i] && !pos[j] {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.8, 0.3, 0.1];
        let pos = [true, false, true, false];
        assert_eq!(selection_auc(&s, &pos).unwrap(), Some(0.75));
        assert_eq!(selection_auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap(), Some(0.5));
        assert_eq!(selection_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), Some(1.0));
        assert_eq!(selection_auc(&[0.9, 0.8], &[true, true]).unwrap(), None);
        assert_eq!(selection_auc(&[0.9, 0.8], &[false, false]).unwrap(), None);
        assert!(selection_auc(&[0.9], &[true, false]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(
            raw in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            // small integer scores force plenty of ties
            let s: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 5.0).collect();
            let pos: Vec<bool> = raw.iter().map(|r| r.1).collect();
            match selection_auc(&s, &pos).unwrap() {
                None => prop_assert!(pos.iter().all(|p| *p) || pos.iter().all(|p| !*p)),
                Some(a) => {
                    prop_assert!((a - pairwise_auc(&s, &pos)).abs() < 1e-12);
                    let flipped: Vec<bool> = pos.iter().map(|p| !p).collect();
                    let b = selection_auc(&s, &flipped).unwrap().unwrap();
                    prop_assert!((a + b - 1.0).abs() < 1e-12);
                    let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
                    prop_assert_eq!(selection_auc(&t, &pos).unwrap(), Some(a));
                }
            }
        }
    }

    fn oracle_classifier(data: &NoisyDataset) -> Classifier {
        // linear model reading the class index off a one-hot feature block
        let k = data.num_classes();
        let mut params = vec![0.0; k * k + k];
        for c in 0..k {
            params[c * k + c] = 10.0;
        }
        Classifier::from_params(Architecture::Linear, k, k, 0, params).unwrap()
    }

    fn one_hot_data(truth: &[usize], noisy: &[usize], k: usize) -> NoisyDataset {
        let x = Array2::from_shape_fn((truth.len(), k), |(i, j)| (truth[i] == j) as u8 as f64);
        NoisyDataset::new(x, noisy.to_vec(), Some(truth.to_vec()), k).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let truth: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let noisy: Vec<usize> = truth.iter().map(|y| (y + 1) % 3).collect();
        let d = one_hot_data(&truth, &noisy, 3);
        let f = oracle_classifier(&d);
        assert_eq!(refurbishment_accuracy(&f, &d).unwrap(), 1.0);
        let clean_test = one_hot_data(&truth, &truth, 3).without_true_labels();
        assert_eq!(test_accuracy(&f, &clean_test).unwrap(), 1.0);

        let u = Classifier::zeros(Architecture::Linear, 3, 3).unwrap();
        assert!((refurbishment_accuracy(&u, &d).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((test_accuracy(&u, &clean_test).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(refurbishment_accuracy(&f, &d.without_true_labels()).is_err());
    }

    #[test]
    fn accuracy_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let k = 4;
            let n = 50;
            let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let d = NoisyDataset::new(x.clone(), truth.clone(), Some(truth.clone()), k).unwrap();
            let f = Classifier::new(Architecture::Mlp { hidden: 5 }, 3, k, seed).unwrap();
            let mut hits = 0;
            for i in 0..n {
                let p = f.forward(x.row(i).as_slice().unwrap()).unwrap();
                hits += (crate::prob::argmax(p.probs()) == truth[i]) as usize;
            }
            let want = hits as f64 / n as f64;
            assert_eq!(refurbishment_accuracy(&f, &d).unwrap(), want);
            assert_eq!(test_accuracy(&f, &d).unwrap(), want);
        }
    }

    #[test]
    fn t_error_examples() {
        let i2 = CorruptionMatrix::identity(2);
        assert_eq!(t_estimation_error(&i2, &i2).unwrap(), 0.0);
        assert_eq!(t_estimation_error(&CorruptionMatrix::uniform(2), &i2).unwrap(), 1.0);
        let p = CorruptionMatrix::new(ndarray::array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(t_estimation_error(&p, &i2).unwrap(), 2.0);
        assert!(t_estimation_error(&CorruptionMatrix::identity(3), &i2).is_err());
    }
}
