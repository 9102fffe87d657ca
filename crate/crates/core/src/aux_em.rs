//! The auxiliary EM cycle: true-class posteriors, soft-target training of
//! the refurbishing network with MixUp, transition-matrix estimates,
//! per-sample outlier likelihoods and label resampling.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::main_em::epoch_batches;
use crate::model::{row_slice, sgd_step_in_place, Classifier, OptimizerConfig, SgdState, SoftBatch};
use crate::prob::{ClassDistribution, CorruptionMatrix, TrainingView, EPS_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuxCycleConfig {
    /// Beta(alpha, alpha) parameter for the MixUp coefficient.
    pub mixup_alpha: f64,
    /// When false the MixUp coefficient is pinned to 1 (no mixing).
    pub mixup: bool,
    /// Jitter scale as a fraction of each feature's standard deviation.
    pub weak_aug_sigma: f64,
    /// Number of jittered copies averaged in the E-step.
    pub aug_copies: usize,
    pub epochs_per_cycle: usize,
}

impl Default for AuxCycleConfig {
    fn default() -> Self {
        Self {
            mixup_alpha: 4.0,
            mixup: true,
            weak_aug_sigma: 0.05,
            aug_copies: 2,
            epochs_per_cycle: 1,
        }
    }
}

impl AuxCycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return Err(Error::Config("aux.mixup_alpha must be positive".into()));
        }
        if !(self.weak_aug_sigma >= 0.0 && self.weak_aug_sigma.is_finite()) {
            return Err(Error::Config("aux.weak_aug_sigma must be nonnegative".into()));
        }
        if self.aug_copies == 0 {
            return Err(Error::Config("aux.aug_copies must be at least 1".into()));
        }
        if self.epochs_per_cycle == 0 {
            return Err(Error::Config("aux.epochs_per_cycle must be positive".into()));
        }
        Ok(())
    }
}

/// Per-dimension standard deviation of the training features; scales the
/// weak-augmentation jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScale(Vec<f64>);

impl FeatureScale {
    pub fn from_features(features: ArrayView2<f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let std = features
            .columns()
            .into_iter()
            .map(|c| {
                let mean = c.sum() / n;
                (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect();
        Self(std)
    }

    pub fn std(&self) -> &[f64] {
        &self.0
    }

    /// Adds `N(0, (sigma * std_j)^2)` noise to each coordinate.
    pub fn jitter<R: Rng + ?Sized>(&self, x: &mut [f64], sigma: f64, rng: &mut R) {
        if sigma == 0.0 {
            return;
        }
        for (v, s) in x.iter_mut().zip(&self.0) {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * s * z;
        }
    }
}

/// `clean_prob * e_{noisy_label} + (1 - clean_prob) * f_out`.
pub fn true_class_posterior(clean_prob: f64, noisy_label: usize, f_out: &ClassDistribution) -> Result<ClassDistribution> {
    let k = f_out.len();
    if noisy_label >= k {
        return Err(Error::ClassOutOfRange {
            index: noisy_label,
            num_classes: k,
        });
    }
    if !(0.0..=1.0).contains(&clean_prob) {
        return Err(Error::DegenerateDistribution(format!("clean probability {clean_prob}")));
    }
    let mut q: Vec<f64> = f_out.probs().iter().map(|p| (1.0 - clean_prob) * p).collect();
    q[noisy_label] += clean_prob;
    Ok(ClassDistribution::from_raw(q))
}

/// Result of the auxiliary E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPosterior {
    /// True-class posteriors `q_i(y)`, `N x K`.
    pub class_post: Array2<f64>,
    /// Augmentation-averaged predictions of the network that produced them.
    pub f_outs: Array2<f64>,
}

/// Averages `f` over `aug_copies` jittered copies of every sample.
pub fn averaged_predictions<R: Rng + ?Sized>(
    f: &Classifier,
    features: ArrayView2<f64>,
    cfg: &AuxCycleConfig,
    scale: &FeatureScale,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let (n, k) = (features.nrows(), f.num_classes());
    let mut out = Array2::zeros((n, k));
    let w = 1.0 / cfg.aug_copies as f64;
    for i in 0..n {
        let x = row_slice(features.row(i));
        for _ in 0..cfg.aug_copies {
            let mut xj = x.to_vec();
            scale.jitter(&mut xj, cfg.weak_aug_sigma, rng);
            let p = f.forward(&xj)?;
            for c in 0..k {
                out[[i, c]] += w * p[c];
            }
        }
    }
    Ok(out)
}

pub fn aux_e_step<R: Rng + ?Sized>(
    f: &Classifier,
    data: &TrainingView<'_>,
    clean_prob: &[f64],
    cfg: &AuxCycleConfig,
    scale: &FeatureScale,
    rng: &mut R,
) -> Result<AuxPosterior> {
    cfg.validate()?;
    if clean_prob.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            got: clean_prob.len(),
        });
    }
    let f_outs = averaged_predictions(f, data.features, cfg, scale, rng)?;
    let mut class_post = Array2::zeros(f_outs.dim());
    for i in 0..data.len() {
        // renormalize to absorb rounding from the copy average
        let f_i = crate::prob::normalize(&f_outs.row(i).to_vec())?;
        let q = true_class_posterior(clean_prob[i], data.noisy_labels[i], &f_i)?;
        for (c, v) in q.probs().iter().enumerate() {
            class_post[[i, c]] = *v;
        }
    }
    Ok(AuxPosterior { class_post, f_outs })
}

/// Draws `max(l, 1 - l)` with `l ~ Beta(alpha, alpha)`.
pub fn sample_mixup_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(format!("mixup alpha: {e}")))?;
    let l: f64 = beta.sample(rng);
    Ok(l.max(1.0 - l))
}

/// Convex combination `lam * a + (1 - lam) * b` of features and targets.
pub fn mix_pair(xa: &[f64], ta: &[f64], xb: &[f64], tb: &[f64], lam: f64) -> (Vec<f64>, Vec<f64>) {
    let x = xa.iter().zip(xb).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
    let t = ta.iter().zip(tb).map(|(a, b)| lam * a + (1.0 - lam) * b).collect();
    (x, t)
}

/// MixUp of two labelled samples with a freshly drawn coefficient.
pub fn mixup<R: Rng + ?Sized>(
    a: (&[f64], &ClassDistribution),
    b: (&[f64], &ClassDistribution),
    alpha: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ClassDistribution, f64)> {
    let lam = sample_mixup_lambda(alpha, rng)?;
    let (x, t) = mix_pair(a.0, a.1.probs(), b.0, b.1.probs(), lam);
    Ok((x, ClassDistribution::from_raw(t), lam))
}

/// Builds the training batch for indices `idx`: jitter each sample, then
/// mix it with a within-batch shuffled partner.
pub fn mixed_batch<R: Rng + ?Sized>(
    data: &TrainingView<'_>,
    class_post: ArrayView2<f64>,
    idx: &[usize],
    cfg: &AuxCycleConfig,
    scale: &FeatureScale,
    rng: &mut R,
) -> Result<SoftBatch> {
    use rand::seq::SliceRandom;
    let (m, d, k) = (idx.len(), data.features.ncols(), class_post.ncols());
    let jittered: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let mut x = data.row(i).to_vec();
            scale.jitter(&mut x, cfg.weak_aug_sigma, rng);
            x
        })
        .collect();
    let mut partner: Vec<usize> = (0..m).collect();
    partner.shuffle(rng);
    let mut features = Array2::zeros((m, d));
    let mut targets = Array2::zeros((m, k));
    for r in 0..m {
        let lam = if cfg.mixup {
            sample_mixup_lambda(cfg.mixup_alpha, rng)?
        } else {
            1.0
        };
        let p = partner[r];
        let ta = class_post.row(idx[r]).to_vec();
        let tb = class_post.row(idx[p]).to_vec();
        let (x, t) = mix_pair(&jittered[r], &ta, &jittered[p], &tb, lam);
        features.row_mut(r).assign(&ndarray::ArrayView1::from(&x));
        targets.row_mut(r).assign(&ndarray::ArrayView1::from(&t));
    }
    Ok(SoftBatch {
        features,
        targets,
        weights: vec![1.0; m],
    })
}

/// Mini-batch SGD on soft-target cross-entropy over MixUp-mixed batches.
/// Returns the updated network and the mean mini-batch loss per epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_aux<R: Rng + ?Sized>(
    f: &Classifier,
    sgd: &mut SgdState,
    data: &TrainingView<'_>,
    class_post: ArrayView2<f64>,
    cfg: &AuxCycleConfig,
    scale: &FeatureScale,
    opt: &OptimizerConfig,
    rng: &mut R,
) -> Result<(Classifier, Vec<f64>)> {
    cfg.validate()?;
    opt.validate(Some(data.len()))?;
    if class_post.dim() != (data.len(), f.num_classes()) {
        return Err(Error::LengthMismatch {
            expected: data.len() * f.num_classes(),
            got: class_post.len(),
        });
    }
    let n = data.len();
    let mut f = f.clone();
    let mut losses = Vec::with_capacity(cfg.epochs_per_cycle);
    for _ in 0..cfg.epochs_per_cycle {
        let mut total = 0.0;
        for idx in epoch_batches(n, opt.batch_size, rng) {
            let batch = mixed_batch(data, class_post, &idx, cfg, scale, rng)?;
            let (loss, grad) = f.grad_weighted_ce(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("auxiliary loss is {loss}")));
            }
            total += loss * idx.len() as f64;
            sgd_step_in_place(&mut f, &grad, opt, sgd)?;
        }
        sgd.epoch += 1;
        losses.push(total / n as f64);
    }
    Ok((f, losses))
}

/// A transition-matrix estimate plus the rows that had no mass and were
/// replaced by uniform rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub matrix: CorruptionMatrix,
    pub empty_rows: Vec<usize>,
}

/// Row `y` is the histogram of observed labels weighted by `mass[i, y]`.
fn weighted_transition(mass: ArrayView2<f64>, noisy_labels: &[usize]) -> Result<TransitionEstimate> {
    let (n, k) = mass.dim();
    if noisy_labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: noisy_labels.len(),
        });
    }
    let mut t = Array2::<f64>::zeros((k, k));
    for (i, &obs) in noisy_labels.iter().enumerate() {
        if obs >= k {
            return Err(Error::ClassOutOfRange {
                index: obs,
                num_classes: k,
            });
        }
        for y in 0..k {
            t[[y, obs]] += mass[[i, y]];
        }
    }
    let mut empty_rows = Vec::new();
    for (y, mut row) in t.rows_mut().into_iter().enumerate() {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|v| v / s);
        } else {
            row.fill(1.0 / k as f64);
            empty_rows.push(y);
        }
    }
    Ok(TransitionEstimate {
        matrix: CorruptionMatrix::new(t)?,
        empty_rows,
    })
}

/// `T[y, y'] = sum_{i: obs_i = y'} q_i(y) / sum_i q_i(y)`.
pub fn estimate_t(class_post: ArrayView2<f64>, noisy_labels: &[usize]) -> Result<TransitionEstimate> {
    weighted_transition(class_post, noisy_labels)
}

/// Same as [`estimate_t`] but only with the corrupted part
/// `(1 - clean_prob_i) * f_out_i[y]` of each posterior.
pub fn estimate_tc(clean_prob: &[f64], f_outs: ArrayView2<f64>, noisy_labels: &[usize]) -> Result<TransitionEstimate> {
    if clean_prob.len() != f_outs.nrows() {
        return Err(Error::LengthMismatch {
            expected: f_outs.nrows(),
            got: clean_prob.len(),
        });
    }
    let mut mass = f_outs.to_owned();
    for (mut row, q) in mass.rows_mut().into_iter().zip(clean_prob) {
        row.mapv_inplace(|v| v * (1.0 - q));
    }
    weighted_transition(mass.view(), noisy_labels)
}

/// `sum_y f_out[y] * Tc[y, noisy_label]`, floored at `EPS_FLOOR`.
pub fn epsilon_update(f_out: &[f64], tc: &CorruptionMatrix, noisy_label: usize) -> Result<f64> {
    let k = tc.num_classes();
    if f_out.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: f_out.len(),
        });
    }
    if noisy_label >= k {
        return Err(Error::ClassOutOfRange {
            index: noisy_label,
            num_classes: k,
        });
    }
    let col = tc.entries().column(noisy_label).to_owned();
    // a constant column gives that constant for any distribution f_out
    let e: f64 = if col.iter().all(|v| *v == col[0]) {
        col[0]
    } else {
        f_out.iter().zip(col.iter()).map(|(p, t)| p * t).sum()
    };
    Ok(e.clamp(EPS_FLOOR, 1.0))
}

/// Per-sample epsilons from raw predictions `f_outs` (`N x K`).
pub fn epsilons_from(f_outs: ArrayView2<f64>, tc: &CorruptionMatrix, noisy_labels: &[usize]) -> Result<Vec<f64>> {
    f_outs
        .rows()
        .into_iter()
        .zip(noisy_labels)
        .map(|(row, &l)| epsilon_update(&row_slice(row), tc, l))
        .collect()
}

/// Argmax of the refurbishing network per sample (lowest class on ties).
pub fn resample_labels(f: &Classifier, data: &TrainingView<'_>) -> Result<Vec<usize>> {
    f.predict(data.features)
}
