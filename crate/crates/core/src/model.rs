//! Softmax classifiers with hand-derived gradients, SGD with momentum,
//! finite-difference gradient checking and a binary checkpoint format.
//!
//! Parameter layout (row-major, flat):
//!
//! * linear: `W[K x d]`, `b[K]`
//! * one hidden layer: `W1[H x d]`, `b1[H]`, `W2[K x H]`, `b2[K]`, with a
//!   rectifier on the hidden units.

use std::borrow::Cow;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::ClassDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn param_count(&self, input_dim: usize, num_classes: usize) -> usize {
        match *self {
            Architecture::Linear => num_classes * (input_dim + 1),
            Architecture::Mlp { hidden } => hidden * (input_dim + 1) + num_classes * (hidden + 1),
        }
    }

    fn hidden(&self) -> usize {
        match *self {
            Architecture::Linear => 0,
            Architecture::Mlp { hidden } => hidden,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: Architecture,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
    params: Vec<f64>,
}

impl Classifier {
    /// Fresh classifier with every parameter drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` of its layer.
    pub fn new(arch: Architecture, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        validate_shape(arch, input_dim, num_classes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count(input_dim, num_classes));
        let mut fill = |count: usize, fan_in: usize, params: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..count).map(|_| rng.random_range(-bound..=bound)));
        };
        match arch {
            Architecture::Linear => fill(num_classes * (input_dim + 1), input_dim, &mut params),
            Architecture::Mlp { hidden } => {
                fill(hidden * (input_dim + 1), input_dim, &mut params);
                fill(num_classes * (hidden + 1), hidden, &mut params);
            }
        }
        Ok(Self {
            arch,
            input_dim,
            num_classes,
            seed,
            params,
        })
    }

    pub fn zeros(arch: Architecture, input_dim: usize, num_classes: usize) -> Result<Self> {
        validate_shape(arch, input_dim, num_classes)?;
        Ok(Self {
            arch,
            input_dim,
            num_classes,
            seed: 0,
            params: vec![0.0; arch.param_count(input_dim, num_classes)],
        })
    }

    pub fn from_params(
        arch: Architecture,
        input_dim: usize,
        num_classes: usize,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        validate_shape(arch, input_dim, num_classes)?;
        let expected = arch.param_count(input_dim, num_classes);
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            arch,
            input_dim,
            num_classes,
            seed,
            params,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Raw logits plus the hidden activations (empty for linear).
    fn logits_with_hidden(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, k) = (self.input_dim, self.num_classes);
        let p = &self.params;
        match self.arch {
            Architecture::Linear => {
                let (w, b) = p.split_at(k * d);
                let z = (0..k).map(|c| dot(&w[c * d..(c + 1) * d], x) + b[c]).collect();
                (z, Vec::new())
            }
            Architecture::Mlp { hidden: h } => {
                let o2 = h * (d + 1);
                let (w1, b1) = (&p[..h * d], &p[h * d..o2]);
                let (w2, b2) = (&p[o2..o2 + k * h], &p[o2 + k * h..]);
                let pre: Vec<f64> = (0..h).map(|j| dot(&w1[j * d..(j + 1) * d], x) + b1[j]).collect();
                let act: Vec<f64> = pre.iter().map(|v| v.max(0.0)).collect();
                let z = (0..k).map(|c| dot(&w2[c * h..(c + 1) * h], &act) + b2[c]).collect();
                (z, pre)
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_with_hidden(x).0)
    }

    /// Softmax output for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<ClassDistribution> {
        self.check_input(x)?;
        let (z, _) = self.logits_with_hidden(x);
        Ok(ClassDistribution::from_raw(softmax(&z)))
    }

    /// Softmax outputs for every row, `N x K`.
    pub fn predict_proba(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((features.nrows(), self.num_classes));
        for (i, row) in features.rows().into_iter().enumerate() {
            let x = row_slice(row);
            self.check_input(&x)?;
            let p = softmax(&self.logits_with_hidden(&x).0);
            out.row_mut(i).assign(&ArrayView1::from(&p));
        }
        Ok(out)
    }

    /// Argmax class per row, lowest index on ties.
    pub fn predict(&self, features: ArrayView2<f64>) -> Result<Vec<usize>> {
        features
            .rows()
            .into_iter()
            .map(|row| {
                let x = row_slice(row);
                self.check_input(&x)?;
                Ok(crate::prob::argmax(&self.logits_with_hidden(&x).0))
            })
            .collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::LengthMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("classifier input".into()));
        }
        Ok(())
    }

    /// Adds the parameter gradient induced by `dz` (gradient w.r.t. the
    /// logits of sample `x`) into `grad`.
    fn backprop(&self, x: &[f64], hidden_pre: &[f64], dz: &[f64], grad: &mut [f64]) {
        let (d, k) = (self.input_dim, self.num_classes);
        match self.arch {
            Architecture::Linear => {
                for c in 0..k {
                    let g = &mut grad[c * d..(c + 1) * d];
                    for (gj, xj) in g.iter_mut().zip(x) {
                        *gj += dz[c] * xj;
                    }
                    grad[k * d + c] += dz[c];
                }
            }
            Architecture::Mlp { hidden: h } => {
                let o2 = h * (d + 1);
                let w2 = &self.params[o2..o2 + k * h];
                let mut da = vec![0.0; h];
                for c in 0..k {
                    for j in 0..h {
                        let a = hidden_pre[j].max(0.0);
                        grad[o2 + c * h + j] += dz[c] * a;
                        da[j] += w2[c * h + j] * dz[c];
                    }
                    grad[o2 + k * h + c] += dz[c];
                }
                for j in 0..h {
                    if hidden_pre[j] > 0.0 {
                        let g = &mut grad[j * d..(j + 1) * d];
                        for (gj, xj) in g.iter_mut().zip(x) {
                            *gj += da[j] * xj;
                        }
                        grad[h * d + j] += da[j];
                    }
                }
            }
        }
    }

    /// Value and gradient of
    /// `-(1/n) sum_i w_i sum_y t_i[y] log p_i[y] + lambda (1/n) sum_i sum_y prior[y] log p_i[y]`.
    ///
    /// `targets`/`weights` absent means no cross-entropy term.
    pub(crate) fn loss_and_grad(
        &self,
        features: ArrayView2<f64>,
        targets: Option<(ArrayView2<f64>, &[f64])>,
        cr: Option<&ConfidenceReg>,
    ) -> Result<(f64, Vec<f64>)> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        let k = self.num_classes;
        if let Some((t, w)) = &targets {
            if t.nrows() != n || w.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: t.nrows().min(w.len()),
                });
            }
            if t.ncols() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: t.ncols(),
                });
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config("sample weights must be finite and nonnegative".into()));
            }
        }
        if let Some(cr) = cr {
            if cr.prior.len() != k {
                return Err(Error::LengthMismatch {
                    expected: k,
                    got: cr.prior.len(),
                });
            }
        }
        let inv_n = 1.0 / n as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut dz = vec![0.0; k];
        for i in 0..n {
            let x = row_slice(features.row(i));
            self.check_input(&x)?;
            let (z, pre) = self.logits_with_hidden(&x);
            let logp = log_softmax(&z);
            let p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
            dz.iter_mut().for_each(|v| *v = 0.0);
            if let Some((t, w)) = &targets {
                let wi = w[i] * inv_n;
                let ti = t.row(i);
                let mass: f64 = ti.sum();
                for c in 0..k {
                    if ti[c] != 0.0 {
                        loss -= wi * ti[c] * logp[c];
                    }
                    dz[c] += wi * (p[c] * mass - ti[c]);
                }
            }
            if let Some(cr) = cr {
                let s = cr.lambda * inv_n;
                let prior = cr.prior.probs();
                for c in 0..k {
                    if prior[c] != 0.0 {
                        loss += s * prior[c] * logp[c];
                    }
                    dz[c] += s * (prior[c] - p[c]);
                }
            }
            self.backprop(&x, &pre, &dz, &mut grad);
        }
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss evaluated to {loss}")));
        }
        Ok((loss, grad))
    }

    /// Weighted soft-target cross-entropy and its exact gradient.
    pub fn grad_weighted_ce(&self, batch: &SoftBatch) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad(
            batch.features.view(),
            Some((batch.targets.view(), &batch.weights)),
            None,
        )
    }

    /// The confidence term `(1/n) sum_i E_prior[log p_i]` and its gradient.
    pub fn grad_confidence_reg(
        &self,
        features: ArrayView2<f64>,
        prior: &ClassDistribution,
    ) -> Result<(f64, Vec<f64>)> {
        let cr = ConfidenceReg {
            prior: prior.clone(),
            lambda: 1.0,
        };
        self.loss_and_grad(features, None, Some(&cr))
    }

    /// Serialize into the checkpoint format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let tag: u32 = match self.arch {
            Architecture::Linear => 0,
            Architecture::Mlp { .. } => 1,
        };
        out.extend_from_slice(&tag.to_le_bytes());
        for v in [
            self.input_dim as u64,
            self.num_classes as u64,
            self.arch.hidden() as u64,
            self.seed,
            self.params.len() as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            line: 0,
            msg: format!("checkpoint: {m}"),
        };
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32buf = [0u8; 4];
        bytes.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
        if u32::from_le_bytes(u32buf) != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        bytes.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
        let tag = u32::from_le_bytes(u32buf);
        let next_u64 = |bytes: &mut &[u8]| -> Result<u64> {
            let mut b = [0u8; 8];
            bytes.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(b))
        };
        let d = next_u64(&mut bytes)? as usize;
        let k = next_u64(&mut bytes)? as usize;
        let h = next_u64(&mut bytes)? as usize;
        let seed = next_u64(&mut bytes)?;
        let count = next_u64(&mut bytes)? as usize;
        let arch = match tag {
            0 => Architecture::Linear,
            1 => Architecture::Mlp { hidden: h },
            _ => return Err(bad("unknown architecture tag")),
        };
        if bytes.len() != count * 8 {
            return Err(bad("parameter block length mismatch"));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_params(arch, d, k, seed, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LNLC";
const CHECKPOINT_VERSION: u32 = 1;

fn validate_shape(arch: Architecture, d: usize, k: usize) -> Result<()> {
    if d == 0 || k < 2 {
        return Err(Error::Config(format!(
            "classifier needs d >= 1 and K >= 2 (got d={d}, K={k})"
        )));
    }
    if let Architecture::Mlp { hidden: 0 } = arch {
        return Err(Error::Config("hidden layer width must be positive".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn row_slice(row: ArrayView1<'_, f64>) -> Cow<'_, [f64]> {
    match row.to_slice() {
        Some(s) => Cow::Borrowed(s),
        None => Cow::Owned(row.to_vec()),
    }
}

/// Max-shifted log-softmax.
pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Features with per-sample soft targets and nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftBatch {
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub weights: Vec<f64>,
}

impl SoftBatch {
    /// One-hot targets with unit weights.
    pub fn from_labels(features: Array2<f64>, labels: &[usize], num_classes: usize) -> Result<Self> {
        let mut targets = Array2::zeros((labels.len(), num_classes));
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::ClassOutOfRange {
                    index: l,
                    num_classes,
                });
            }
            targets[[i, l]] = 1.0;
        }
        Ok(Self {
            features,
            targets,
            weights: vec![1.0; labels.len()],
        })
    }
}

/// `lambda * eta` term with class prior `prior`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceReg {
    pub prior: ClassDistribution,
    pub lambda: f64,
}

/// Losses that can be checked against finite differences.
#[derive(Debug, Clone)]
pub enum NamedLoss {
    WeightedCe(SoftBatch),
    ConfidenceReg {
        features: Array2<f64>,
        prior: ClassDistribution,
    },
    /// Cross-entropy plus `lambda * eta`.
    CeWithCr { batch: SoftBatch, cr: ConfidenceReg },
}

impl NamedLoss {
    pub fn value_and_grad(&self, c: &Classifier) -> Result<(f64, Vec<f64>)> {
        match self {
            NamedLoss::WeightedCe(b) => c.grad_weighted_ce(b),
            NamedLoss::ConfidenceReg { features, prior } => c.grad_confidence_reg(features.view(), prior),
            NamedLoss::CeWithCr { batch, cr } => c.loss_and_grad(
                batch.features.view(),
                Some((batch.targets.view(), &batch.weights)),
                Some(cr),
            ),
        }
    }

    fn features(&self) -> ArrayView2<'_, f64> {
        match self {
            NamedLoss::WeightedCe(b) | NamedLoss::CeWithCr { batch: b, .. } => b.features.view(),
            NamedLoss::ConfidenceReg { features, .. } => features.view(),
        }
    }
}

/// Step used by [`gradient_check`].
pub const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-4;

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences, `|a - n| / max(1e-8, |a| + |n|)`.
///
/// Hidden units whose pre-activation lies within `1e-4` of the rectifier
/// kink for some sample get their bias nudged first, so the check runs on a
/// slightly moved copy of `c`.
pub fn gradient_check(c: &Classifier, loss: &NamedLoss) -> Result<f64> {
    let c = nudge_off_kinks(c, loss.features());
    let (_, analytic) = loss.value_and_grad(&c)?;
    let mut probe = c.clone();
    let mut worst: f64 = 0.0;
    for j in 0..probe.params.len() {
        let orig = probe.params[j];
        probe.params[j] = orig + FD_STEP;
        let up = loss.value_and_grad(&probe)?.0;
        probe.params[j] = orig - FD_STEP;
        let down = loss.value_and_grad(&probe)?.0;
        probe.params[j] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let denom = (analytic[j].abs() + numeric.abs()).max(1e-8);
        worst = worst.max((analytic[j] - numeric).abs() / denom);
    }
    Ok(worst)
}

fn nudge_off_kinks(c: &Classifier, features: ArrayView2<f64>) -> Classifier {
    let mut c = c.clone();
    let Architecture::Mlp { hidden: h } = c.arch else {
        return c;
    };
    let d = c.input_dim;
    for _ in 0..50 {
        let mut moved = false;
        for row in features.rows() {
            let x = row_slice(row);
            let (_, pre) = c.logits_with_hidden(&x);
            for (j, v) in pre.iter().enumerate() {
                if v.abs() < KINK_MARGIN {
                    c.params[h * d + j] += if *v >= 0.0 { 3.0 * KINK_MARGIN } else { -3.0 * KINK_MARGIN };
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Multiply the rate by `factor` every `every_epochs` epochs.
    Step { factor: f64, every_epochs: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub schedule: Schedule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 128,
            schedule: Schedule::Constant,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, n: Option<usize>) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(n) = n {
            if self.batch_size > n {
                return Err(Error::Config(format!(
                    "batch_size {} exceeds dataset size {n}",
                    self.batch_size
                )));
            }
        }
        if let Schedule::Step { factor, every_epochs } = self.schedule {
            if !(factor > 0.0) || every_epochs == 0 {
                return Err(Error::Config("step schedule needs factor > 0 and every_epochs >= 1".into()));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.learning_rate,
            Schedule::Step { factor, every_epochs } => {
                self.learning_rate * factor.powi((epoch / every_epochs) as i32)
            }
        }
    }
}

/// Momentum buffer plus the number of completed epochs (drives the schedule).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SgdState {
    pub velocity: Vec<f64>,
    pub epoch: usize,
}

impl SgdState {
    pub fn new(param_count: usize) -> Self {
        Self {
            velocity: vec![0.0; param_count],
            epoch: 0,
        }
    }
}

/// `v <- momentum v + grad + wd params; params <- params - lr v`.
pub fn sgd_step(
    c: &Classifier,
    grad: &[f64],
    cfg: &OptimizerConfig,
    state: &SgdState,
) -> Result<(Classifier, SgdState)> {
    let mut c = c.clone();
    let mut state = state.clone();
    sgd_step_in_place(&mut c, grad, cfg, &mut state)?;
    Ok((c, state))
}

pub(crate) fn sgd_step_in_place(
    c: &mut Classifier,
    grad: &[f64],
    cfg: &OptimizerConfig,
    state: &mut SgdState,
) -> Result<()> {
    if grad.len() != c.params.len() {
        return Err(Error::LengthMismatch {
            expected: c.params.len(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    if state.velocity.len() != grad.len() {
        state.velocity = vec![0.0; grad.len()];
    }
    let lr = cfg.lr_at(state.epoch);
    for ((p, v), g) in c.params.iter_mut().zip(state.velocity.iter_mut()).zip(grad) {
        *v = cfg.momentum * *v + g + cfg.weight_decay * *p;
        *p -= lr * *v;
    }
    Ok(())
}

/// Gathers rows `idx` of `features` into a new matrix.
pub(crate) fn gather_rows(features: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let d = features.ncols();
    let mut out = Array2::zeros((idx.len(), d));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&features.row(i));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand_distr::{Distribution, Normal};

    fn random_batch(d: usize, k: usize, n: usize, seed: u64) -> SoftBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let features = Array2::from_shape_fn((n, d), |_| normal.sample(&mut rng));
        let mut targets = Array2::zeros((n, k));
        for i in 0..n {
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            for c in 0..k {
                targets[[i, c]] = raw[c] / s;
            }
        }
        let weights = (0..n).map(|_| rng.random::<f64>()).collect();
        SoftBatch {
            features,
            targets,
            weights,
        }
    }

    #[test]
    fn param_counts() {
        assert_eq!(Architecture::Linear.param_count(3, 4), 16);
        assert_eq!(Architecture::Mlp { hidden: 5 }.param_count(3, 4), 5 * 4 + 4 * 6);
        let c = Classifier::new(Architecture::Mlp { hidden: 5 }, 3, 4, 1).unwrap();
        assert_eq!(c.param_count(), 44);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let c = Classifier::new(Architecture::Mlp { hidden: 16 }, 4, 3, 9).unwrap();
        let (first, second) = c.params().split_at(16 * 5);
        assert!(first.iter().all(|v| v.abs() <= 0.5));
        assert!(second.iter().all(|v| v.abs() <= 0.25));
        assert_eq!(c, Classifier::new(Architecture::Mlp { hidden: 16 }, 4, 3, 9).unwrap());
    }

    #[test]
    fn zero_params_give_uniform() {
        let c = Classifier::zeros(Architecture::Linear, 3, 4).unwrap();
        let p = c.forward(&[1.0, -2.0, 5.0]).unwrap();
        assert!(p.probs().iter().all(|v| *v == 0.25));
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.0, 3f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
        let shifted = softmax(&[0.0 + 123.4, 3f64.ln() + 123.4]);
        assert_abs_diff_eq!(shifted[1], 0.75, epsilon = 1e-12);
        let big = softmax(&[1000.0, 0.0]);
        assert!(big.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn forward_rejects_bad_input() {
        let c = Classifier::zeros(Architecture::Linear, 2, 2).unwrap();
        assert!(c.forward(&[f64::NAN, 0.0]).is_err());
        assert!(c.forward(&[0.0]).is_err());
    }

    #[test]
    fn zero_weights_zero_gradient() {
        let c = Classifier::new(Architecture::Mlp { hidden: 4 }, 3, 2, 3).unwrap();
        let mut b = random_batch(3, 2, 5, 4);
        b.weights = vec![0.0; 5];
        let (loss, g) = c.grad_weighted_ce(&b).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn one_hot_ce_matches_softmax_minus_onehot() {
        let c = Classifier::new(Architecture::Linear, 2, 3, 5).unwrap();
        let x = array![[0.5, -1.5]];
        let b = SoftBatch::from_labels(x.clone(), &[2], 3).unwrap();
        let (loss, g) = c.grad_weighted_ce(&b).unwrap();
        let p = c.forward(&[0.5, -1.5]).unwrap();
        assert_abs_diff_eq!(loss, -p[2].ln(), epsilon = 1e-12);
        for k in 0..3 {
            let dz = p[k] - if k == 2 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(g[k * 2], dz * 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(g[k * 2 + 1], dz * -1.5, epsilon = 1e-12);
            assert_abs_diff_eq!(g[6 + k], dz, epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_ce_matches_finite_differences() {
        let c = Classifier::new(Architecture::Mlp { hidden: 4 }, 3, 2, 11).unwrap();
        let loss = NamedLoss::WeightedCe(random_batch(3, 2, 5, 12));
        assert!(gradient_check(&c, &loss).unwrap() < 1e-4);
    }

    #[test]
    fn confidence_reg_examples() {
        let c = Classifier::new(Architecture::Linear, 2, 3, 21).unwrap();
        let b = random_batch(2, 3, 6, 22);
        let prior = crate::prob::one_hot(1, 3).unwrap();
        let (eta, g) = c.grad_confidence_reg(b.features.view(), &prior).unwrap();
        // degenerate prior: mean log-probability of class 1
        let labels = vec![1; 6];
        let ce = SoftBatch::from_labels(b.features.clone(), &labels, 3).unwrap();
        let (ce_val, ce_grad) = c.grad_weighted_ce(&ce).unwrap();
        assert_abs_diff_eq!(eta, -ce_val, epsilon = 1e-12);
        for (a, b) in g.iter().zip(&ce_grad) {
            assert_abs_diff_eq!(*a, -b, epsilon = 1e-12);
        }

        let zero = Classifier::zeros(Architecture::Linear, 2, 4).unwrap();
        let (eta, _) = zero
            .grad_confidence_reg(b.features.view(), &ClassDistribution::uniform(4))
            .unwrap();
        assert_abs_diff_eq!(eta, 0.25f64.ln(), epsilon = 1e-12);

        let loss = NamedLoss::ConfidenceReg {
            features: b.features,
            prior: crate::prob::normalize(&[0.2, 0.5, 0.3]).unwrap(),
        };
        assert!(gradient_check(&c, &loss).unwrap() < 1e-4);
    }

    #[test]
    fn empty_batch_errors() {
        let c = Classifier::zeros(Architecture::Linear, 2, 2).unwrap();
        let b = SoftBatch {
            features: Array2::zeros((0, 2)),
            targets: Array2::zeros((0, 2)),
            weights: vec![],
        };
        assert!(matches!(c.grad_weighted_ce(&b), Err(Error::Empty(_))));
        assert!(c
            .grad_confidence_reg(Array2::zeros((0, 2)).view(), &ClassDistribution::uniform(2))
            .is_err());
    }

    #[test]
    fn sgd_examples() {
        let c = Classifier::new(Architecture::Linear, 2, 2, 1).unwrap();
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 1,
            schedule: Schedule::Constant,
        };
        let zero = vec![0.0; c.param_count()];
        let (same, _) = sgd_step(&c, &zero, &cfg, &SgdState::new(6)).unwrap();
        assert_eq!(same, c);

        let plain = OptimizerConfig { momentum: 0.0, ..cfg };
        let g: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let (next, _) = sgd_step(&c, &g, &plain, &SgdState::new(6)).unwrap();
        for j in 0..6 {
            assert_abs_diff_eq!(next.params()[j], c.params()[j] - 0.1 * g[j], epsilon = 1e-15);
        }

        let (one, s1) = sgd_step(&c, &g, &cfg, &SgdState::new(6)).unwrap();
        let (two, _) = sgd_step(&one, &g, &cfg, &s1).unwrap();
        for j in 0..6 {
            let disp = one.params()[j] - two.params()[j];
            assert_abs_diff_eq!(disp, 0.1 * 1.9 * g[j], epsilon = 1e-12);
        }

        let mut bad = g.clone();
        bad[0] = f64::NAN;
        assert!(matches!(
            sgd_step(&c, &bad, &cfg, &SgdState::new(6)),
            Err(Error::Numerical(_))
        ));
        assert!(sgd_step(&c, &g[..3], &cfg, &SgdState::new(6)).is_err());
    }

    #[test]
    fn step_schedule() {
        let cfg = OptimizerConfig {
            schedule: Schedule::Step {
                factor: 0.5,
                every_epochs: 10,
            },
            ..OptimizerConfig::default()
        };
        assert_eq!(cfg.lr_at(9), 0.05);
        assert_eq!(cfg.lr_at(10), 0.025);
        assert_eq!(cfg.lr_at(25), 0.0125);
    }

    #[test]
    fn optimizer_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate(Some(1000)).is_ok());
        assert!(ok.validate(Some(10)).is_err());
        assert!(OptimizerConfig { learning_rate: 0.0, ..ok }.validate(None).is_err());
        assert!(OptimizerConfig { momentum: 1.0, ..ok }.validate(None).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        for arch in [Architecture::Linear, Architecture::Mlp { hidden: 7 }] {
            let c = Classifier::new(arch, 3, 4, 77).unwrap();
            let bytes = c.to_bytes();
            let back = Classifier::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert!(Classifier::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
        let mut bytes = Classifier::zeros(Architecture::Linear, 1, 2).unwrap().to_bytes();
        bytes[0] = b'X';
        assert!(Classifier::from_bytes(&bytes).is_err());
    }

    #[test]
    fn checkpoint_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        let c = Classifier::new(Architecture::Mlp { hidden: 3 }, 2, 2, 5).unwrap();
        c.save(&path).unwrap();
        assert_eq!(Classifier::load(&path).unwrap(), c);
    }

    #[test]
    fn nudge_moves_biases_off_kinks() {
        let mut c = Classifier::new(Architecture::Mlp { hidden: 2 }, 1, 2, 1).unwrap();
        // W1 = [1, 1], b1 = [0, 0.5]; sample x = 0 sits on the first kink
        c.params_mut()[..4].copy_from_slice(&[1.0, 1.0, 0.0, 0.5]);
        let feats = array![[0.0]];
        let moved = nudge_off_kinks(&c, feats.view());
        assert!(moved.params()[2].abs() >= KINK_MARGIN);
        assert_eq!(moved.params()[3], 0.5);
    }
}
