//! The main EM cycle: cleanness posteriors, the mixture weight, and training
//! of the main network on resampled (or reweighted) labels with the
//! confidence regularizer.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    gather_rows, row_slice, sgd_step_in_place, Classifier, ConfidenceReg, OptimizerConfig, SgdState,
};
use crate::prob::{clamp_gamma, ClassDistribution, MixtureState, TrainingView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainMode {
    /// Cross-entropy on labels refurbished by the auxiliary network.
    Resample,
    /// Cross-entropy on the noisy labels weighted by cleanness.
    Reweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonMode {
    Adaptive,
    FixedUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MainCycleConfig {
    pub lambda_cr: f64,
    pub mode: MainMode,
    pub epsilon_mode: EpsilonMode,
    pub epochs_per_cycle: usize,
}

impl Default for MainCycleConfig {
    fn default() -> Self {
        Self {
            lambda_cr: 3.0,
            mode: MainMode::Resample,
            epsilon_mode: EpsilonMode::Adaptive,
            epochs_per_cycle: 1,
        }
    }
}

impl MainCycleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cr >= 0.0 && self.lambda_cr.is_finite()) {
            return Err(Error::Config("main.lambda_cr must be finite and nonnegative".into()));
        }
        if self.epochs_per_cycle == 0 {
            return Err(Error::Config("main.epochs_per_cycle must be positive".into()));
        }
        Ok(())
    }
}

/// Posterior probability that a sample is clean given the main network's
/// probability `g_out` of its observed label.
pub fn clean_posterior(g_out: f64, gamma: f64, eps: f64) -> f64 {
    let clean = gamma * g_out;
    let denom = clean + (1.0 - gamma) * eps;
    if denom > 0.0 {
        (clean / denom).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Main network's probability of the observed label, per sample.
pub fn observed_label_probs(g: &Classifier, data: &TrainingView<'_>) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let x = row_slice(data.row(i));
        out.push(g.forward(&x)?[data.noisy_labels[i]]);
    }
    Ok(out)
}

pub fn e_step(g: &Classifier, data: &TrainingView<'_>, mix: &MixtureState) -> Result<Vec<f64>> {
    check_len(mix.epsilons().len(), data.len())?;
    let g_out = observed_label_probs(g, data)?;
    Ok(g_out
        .iter()
        .zip(mix.epsilons())
        .map(|(&p, &e)| clean_posterior(p, mix.gamma(), e))
        .collect())
}

/// Mean cleanness, clamped into `[GAMMA_MIN, 1 - GAMMA_MIN]`.
pub fn update_gamma(clean_prob: &[f64]) -> Result<f64> {
    if clean_prob.is_empty() {
        return Err(Error::Empty("clean probabilities"));
    }
    let mean = clean_prob.iter().sum::<f64>() / clean_prob.len() as f64;
    Ok(clamp_gamma(mean))
}

/// The expected complete-data log-likelihood from precomputed
/// observed-label probabilities. Returns `-inf` when a term with positive
/// weight has a zero likelihood.
pub fn m_step_objective_from_outputs(g_out: &[f64], gamma: f64, eps: &[f64], clean_prob: &[f64]) -> Result<f64> {
    check_len(eps.len(), g_out.len())?;
    check_len(clean_prob.len(), g_out.len())?;
    if g_out.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let mut total = 0.0;
    for ((&p, &e), &q) in g_out.iter().zip(eps).zip(clean_prob) {
        if q > 0.0 {
            total += q * (gamma * p).ln();
        }
        if q < 1.0 {
            total += (1.0 - q) * ((1.0 - gamma) * e).ln();
        }
    }
    let v = total / g_out.len() as f64;
    Ok(if v.is_nan() { f64::NEG_INFINITY } else { v })
}

pub fn m_step_objective(
    g: &Classifier,
    data: &TrainingView<'_>,
    mix: &MixtureState,
    clean_prob: &[f64],
) -> Result<f64> {
    let g_out = observed_label_probs(g, data)?;
    m_step_objective_from_outputs(&g_out, mix.gamma(), mix.epsilons(), clean_prob)
}

/// `(1/N) sum_i log(gamma g(x_i)[y_i] + (1 - gamma) eps_i)`.
pub fn mixture_log_likelihood(g: &Classifier, data: &TrainingView<'_>, mix: &MixtureState) -> Result<f64> {
    check_len(mix.epsilons().len(), data.len())?;
    if data.is_empty() {
        return Err(Error::Empty("samples"));
    }
    let g_out = observed_label_probs(g, data)?;
    let gamma = mix.gamma();
    let total: f64 = g_out
        .iter()
        .zip(mix.epsilons())
        .map(|(&p, &e)| (gamma * p + (1.0 - gamma) * e).ln())
        .sum();
    Ok(total / data.len() as f64)
}

/// Empirical label marginal, or uniform if some class never occurs.
pub fn label_prior(labels: &[usize], num_classes: usize) -> ClassDistribution {
    let mut counts = vec![0.0; num_classes];
    for &l in labels {
        counts[l] += 1.0;
    }
    if labels.is_empty() || counts.contains(&0.0) {
        return ClassDistribution::uniform(num_classes);
    }
    let n = labels.len() as f64;
    ClassDistribution::from_raw(counts.into_iter().map(|c| c / n).collect())
}

/// What the main network is fitted to in one M-step.
#[derive(Debug, Clone, Copy)]
pub enum MainTargets<'a> {
    /// Refurbished labels from the auxiliary network.
    Resampled(&'a [usize]),
    /// The noisy labels, weighted per sample by cleanness.
    Reweighted { clean_prob: &'a [f64] },
}

impl<'a> MainTargets<'a> {
    fn labels<'s>(&'s self, noisy: &'s [usize]) -> &'s [usize] {
        match self {
            MainTargets::Resampled(l) => l,
            MainTargets::Reweighted { .. } => noisy,
        }
    }

    fn weight(&self, i: usize) -> f64 {
        match *self {
            MainTargets::Resampled(_) => 1.0,
            MainTargets::Reweighted { clean_prob } => clean_prob[i],
        }
    }
}

/// Full-data value of the main loss `CE + lambda * eta` for `targets`.
pub fn main_loss(g: &Classifier, data: &TrainingView<'_>, targets: MainTargets<'_>, lambda_cr: f64) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    let (loss, _) = batch_loss_and_grad(g, data, targets, &all, lambda_cr)?;
    Ok(loss)
}

fn batch_loss_and_grad(
    g: &Classifier,
    data: &TrainingView<'_>,
    targets: MainTargets<'_>,
    idx: &[usize],
    lambda_cr: f64,
) -> Result<(f64, Vec<f64>)> {
    let k = data.num_classes;
    let labels = targets.labels(data.noisy_labels);
    let features = gather_rows(data.features, idx);
    let mut t = Array2::zeros((idx.len(), k));
    let mut w = Vec::with_capacity(idx.len());
    for (r, &i) in idx.iter().enumerate() {
        t[[r, labels[i]]] = 1.0;
        w.push(targets.weight(i));
    }
    let cr = (lambda_cr > 0.0).then(|| ConfidenceReg {
        prior: label_prior(labels, k),
        lambda: lambda_cr,
    });
    g.loss_and_grad(features.view(), Some((t.view(), &w)), cr.as_ref())
}

/// Shuffled mini-batch index lists covering `0..n` once.
pub(crate) fn epoch_batches<R: Rng + ?Sized>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Runs `cfg.epochs_per_cycle` epochs of mini-batch SGD on the main loss.
/// Returns the updated classifier and the mean mini-batch loss per epoch.
pub fn train_main<R: Rng + ?Sized>(
    g: &Classifier,
    sgd: &mut SgdState,
    data: &TrainingView<'_>,
    targets: MainTargets<'_>,
    cfg: &MainCycleConfig,
    opt: &OptimizerConfig,
    rng: &mut R,
) -> Result<(Classifier, Vec<f64>)> {
    cfg.validate()?;
    opt.validate(Some(data.len()))?;
    let n = data.len();
    match targets {
        MainTargets::Resampled(l) => {
            check_len(l.len(), n)?;
            if let Some(&bad) = l.iter().find(|&&c| c >= data.num_classes) {
                return Err(Error::ClassOutOfRange {
                    index: bad,
                    num_classes: data.num_classes,
                });
            }
        }
        MainTargets::Reweighted { clean_prob } => check_len(clean_prob.len(), n)?,
    }
    let mut g = g.clone();
    let mut losses = Vec::with_capacity(cfg.epochs_per_cycle);
    for _ in 0..cfg.epochs_per_cycle {
        let mut total = 0.0;
        for idx in epoch_batches(n, opt.batch_size, rng) {
            let (loss, grad) = batch_loss_and_grad(&g, data, targets, &idx, cfg.lambda_cr)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("main loss is {loss}")));
            }
            total += loss * idx.len() as f64;
            sgd_step_in_place(&mut g, &grad, opt, sgd)?;
        }
        sgd.epoch += 1;
        losses.push(total / n as f64);
    }
    Ok((g, losses))
}

fn check_len(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}
