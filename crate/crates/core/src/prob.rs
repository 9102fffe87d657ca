//! Domain types and exact probability primitives.
//!
//! Class indices are 0-based everywhere in memory. Conversion to the
//! 1-based external convention happens only in the file readers/writers.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for the mixture weight; the upper clamp is `1 - GAMMA_MIN`.
pub const GAMMA_MIN: f64 = 1e-3;
/// Floor for per-sample outlier likelihoods.
pub const EPS_FLOOR: f64 = 1e-8;
/// Tolerance used when validating that a vector sits on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub fn clamp_gamma(gamma: f64) -> f64 {
    gamma.clamp(GAMMA_MIN, 1.0 - GAMMA_MIN)
}

/// A probability vector over `K >= 2` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Wraps `probs` after checking the simplex invariant.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_simplex(&probs)?;
        Ok(Self(probs))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&probs).is_ok());
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

impl std::ops::Index<usize> for ClassDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_simplex(p: &[f64]) -> Result<()> {
    if p.len() < 2 {
        return Err(Error::DegenerateDistribution(format!(
            "need at least 2 classes, got {}",
            p.len()
        )));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateDistribution(
            "entries must be finite and nonnegative".into(),
        ));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::DegenerateDistribution(format!("entries sum to {s}")));
    }
    Ok(())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Rescales a nonnegative vector to sum to one.
pub fn normalize(v: &[f64]) -> Result<ClassDistribution> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateDistribution(
            "entries must be finite and nonnegative".into(),
        ));
    }
    let s: f64 = v.iter().sum();
    if s <= 0.0 {
        return Err(Error::DegenerateDistribution("all entries are zero".into()));
    }
    ClassDistribution::new(v.iter().map(|x| x / s).collect())
}

/// The point mass at class `c` (0-based) over `k` classes.
pub fn one_hot(c: usize, k: usize) -> Result<ClassDistribution> {
    if c >= k {
        return Err(Error::ClassOutOfRange {
            index: c,
            num_classes: k,
        });
    }
    let mut v = vec![0.0; k];
    v[c] = 1.0;
    ClassDistribution::new(v)
}

pub fn total_variation(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    tv_slices(p.probs(), q.probs())
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Max over rows of the total-variation distance between two row-stochastic tables.
pub fn max_row_tv(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
        let tv = 0.5 * ra.iter().zip(rb.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>();
        worst = worst.max(tv);
    }
    Ok(worst)
}

/// Labelled feature matrix with optionally known ground truth.
///
/// Training code never receives this type directly; it gets a
/// [`TrainingView`], which has no access to `true_labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    features: Array2<f64>,
    noisy_labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    num_classes: usize,
}

impl NoisyDataset {
    pub fn new(
        features: Array2<f64>,
        noisy_labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        let n = features.nrows();
        if noisy_labels.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: noisy_labels.len(),
            });
        }
        if let Some(t) = &true_labels {
            if t.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: t.len(),
                });
            }
        }
        let labels = noisy_labels.iter().chain(true_labels.iter().flatten());
        for &l in labels {
            if l >= num_classes {
                return Err(Error::ClassOutOfRange {
                    index: l,
                    num_classes,
                });
            }
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features".into()));
        }
        Ok(Self {
            features,
            noisy_labels,
            true_labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    /// Per-sample indicator `noisy == true`.
    pub fn clean_mask(&self) -> Result<Vec<bool>> {
        let t = self.true_labels().ok_or(Error::MissingTrueLabels)?;
        Ok(self.noisy_labels.iter().zip(t).map(|(a, b)| a == b).collect())
    }

    pub fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.features.clone(),
            noisy_labels,
            self.true_labels.clone(),
            self.num_classes,
        )
    }

    pub fn without_true_labels(&self) -> Self {
        Self {
            true_labels: None,
            ..self.clone()
        }
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            features: self.features.view(),
            noisy_labels: &self.noisy_labels,
            num_classes: self.num_classes,
        }
    }
}

/// The part of a dataset that training code is allowed to see.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub features: ArrayView2<'a, f64>,
    pub noisy_labels: &'a [usize],
    pub num_classes: usize,
}

impl<'a> TrainingView<'a> {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'a, f64> {
        self.features.index_axis_move(ndarray::Axis(0), i)
    }
}

/// Mixture weight and per-sample outlier likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureState {
    gamma: f64,
    epsilons: Vec<f64>,
}

impl MixtureState {
    /// Clamps `gamma` and floors every epsilon.
    pub fn new(gamma: f64, epsilons: Vec<f64>) -> Result<Self> {
        if !gamma.is_finite() || epsilons.iter().any(|e| !e.is_finite()) {
            return Err(Error::NonFinite("mixture state".into()));
        }
        Ok(Self {
            gamma: clamp_gamma(gamma),
            epsilons: epsilons.into_iter().map(|e| e.clamp(EPS_FLOOR, 1.0)).collect(),
        })
    }

    /// Every epsilon at `1/K`.
    pub fn uniform(gamma: f64, n: usize, k: usize) -> Self {
        Self {
            gamma: clamp_gamma(gamma),
            epsilons: vec![1.0 / k as f64; n],
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.epsilons
    }

    pub fn with_gamma(&self, gamma: f64) -> Self {
        Self {
            gamma: clamp_gamma(gamma),
            epsilons: self.epsilons.clone(),
        }
    }
}

/// Cleanness and true-class posteriors for every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSet {
    pub clean_prob: Vec<f64>,
    pub class_post: Array2<f64>,
}

impl PosteriorSet {
    pub fn new(clean_prob: Vec<f64>, class_post: Array2<f64>) -> Result<Self> {
        if clean_prob.len() != class_post.nrows() {
            return Err(Error::LengthMismatch {
                expected: class_post.nrows(),
                got: clean_prob.len(),
            });
        }
        if clean_prob.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::DegenerateDistribution(
                "clean probabilities must lie in [0, 1]".into(),
            ));
        }
        for row in class_post.rows() {
            check_simplex(row.as_slice().unwrap_or(&row.to_vec()))?;
        }
        Ok(Self {
            clean_prob,
            class_post,
        })
    }
}

/// Row-stochastic `K x K` matrix; `entries[[y, y_obs]] = p(y_obs | y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionMatrix {
    entries: Array2<f64>,
}

impl CorruptionMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::LengthMismatch {
                expected: r,
                got: c,
            });
        }
        for row in entries.rows() {
            check_simplex(&row.to_vec())?;
        }
        Ok(Self { entries })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            entries: Array2::eye(k),
        }
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            entries: Array2::from_elem((k, k), 1.0 / k as f64),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[[from, to]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().probs(), &[0.5, 0.5]);
        assert_eq!(normalize(&[1.0, 0.0, 0.0]).unwrap().probs(), &[1.0, 0.0, 0.0]);
        assert_eq!(normalize(&[1.0, 3.0]).unwrap().probs(), &[0.25, 0.75]);
    }

    #[test]
    fn normalize_rejects_degenerate() {
        assert!(matches!(
            normalize(&[0.0, 0.0]),
            Err(Error::DegenerateDistribution(_))
        ));
        assert!(matches!(
            normalize(&[1.0, -0.5]),
            Err(Error::DegenerateDistribution(_))
        ));
        assert!(normalize(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn one_hot_examples() {
        assert_eq!(one_hot(1, 3).unwrap().probs(), &[0.0, 1.0, 0.0]);
        assert_eq!(one_hot(0, 2).unwrap().probs(), &[1.0, 0.0]);
        assert_eq!(one_hot(3, 4).unwrap().probs(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            one_hot(4, 4),
            Err(Error::ClassOutOfRange { index: 4, .. })
        ));
    }

    #[test]
    fn tv_examples() {
        let d = |v: &[f64]| ClassDistribution::new(v.to_vec()).unwrap();
        assert_eq!(total_variation(&d(&[1.0, 0.0]), &d(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(total_variation(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert_abs_diff_eq!(
            total_variation(&d(&[0.5, 0.5]), &d(&[0.75, 0.25])).unwrap(),
            0.25,
            epsilon = 1e-15
        );
        assert!(total_variation(&d(&[0.5, 0.5]), &d(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn mixture_state_clamps() {
        let m = MixtureState::new(1.0, vec![0.0, 0.5]).unwrap();
        assert_eq!(m.gamma(), 1.0 - GAMMA_MIN);
        assert_eq!(m.epsilons(), &[EPS_FLOOR, 0.5]);
        assert_eq!(MixtureState::uniform(0.0, 2, 4).gamma(), GAMMA_MIN);
    }

    #[test]
    fn dataset_validation() {
        let x = Array2::zeros((2, 3));
        assert!(NoisyDataset::new(x.clone(), vec![0, 2], None, 2).is_err());
        assert!(NoisyDataset::new(x.clone(), vec![0], None, 2).is_err());
        let mut bad = x.clone();
        bad[[0, 0]] = f64::INFINITY;
        assert!(NoisyDataset::new(bad, vec![0, 1], None, 2).is_err());
        let ok = NoisyDataset::new(x, vec![0, 1], Some(vec![0, 0]), 2).unwrap();
        assert_eq!(ok.clean_mask().unwrap(), vec![true, false]);
    }

    fn positive_vec() -> impl Strategy<Value = Vec<f64>> {
        (2usize..8).prop_flat_map(|k| prop::collection::vec(1e-6f64..10.0, k))
    }

    fn dist_triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (2usize..6).prop_flat_map(|k| {
            let v = || prop::collection::vec(1e-6f64..1.0, k);
            (v(), v(), v())
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in positive_vec()) {
            let once = normalize(&v).unwrap();
            let twice = normalize(once.probs()).unwrap();
            for (a, b) in once.probs().iter().zip(twice.probs()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn tv_symmetric_and_triangle((a, b, c) in dist_triple()) {
            let (p, q, r) = (normalize(&a).unwrap(), normalize(&b).unwrap(), normalize(&c).unwrap());
            let pq = total_variation(&p, &q).unwrap();
            prop_assert!((pq - total_variation(&q, &p).unwrap()).abs() <= 1e-15);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&pq));
            let pr = total_variation(&p, &r).unwrap();
            let rq = total_variation(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }

        #[test]
        fn corruption_rows_survive_normalize(rows in (2usize..6).prop_flat_map(|k| prop::collection::vec(prop::collection::vec(1e-6f64..1.0, k), k))) {
            let k = rows.len();
            let mut m = Array2::zeros((k, k));
            for (i, r) in rows.iter().enumerate() {
                let n = normalize(r).unwrap();
                for j in 0..k { m[[i, j]] = n[j]; }
            }
            let cm = CorruptionMatrix::new(m).unwrap();
            for row in cm.entries().rows() {
                let again = normalize(&row.to_vec()).unwrap();
                for (a, b) in row.iter().zip(again.probs()) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
