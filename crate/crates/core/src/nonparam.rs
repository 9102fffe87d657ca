//! The non-parametric limit of the confidence-regularized loss.
//!
//! With a classifier free to realize any probability table, the regularized
//! loss
//!
//! ```text
//! L(g) = -E_{p(x,y)}[log g(x)[y]] + lambda * E_{p(x)} E_{p(y)}[log g(x)[y]]
//! ```
//!
//! has the minimizer `g*(x) ∝ (p(y|x) - lambda p(y))_+`. When the data law is
//! a mixture `gamma' p_pi(y|x) + (1 - gamma') / K` with a uniform label
//! marginal, `lambda = 1 - gamma'` makes `g*` equal `p_pi`. This module
//! computes both sides: the closed form, and an independent projected
//! gradient search over row-stochastic tables.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prob::{max_row_tv, normalize, ClassDistribution};

/// Floor applied inside logarithms.
pub const LOG_CLIP: f64 = 1e-12;
/// Allowed deviation of the label marginal from uniform.
pub const MARGINAL_TOL: f64 = 1e-6;

/// A finite input space with a clean conditional `p_pi(y|x)` corrupted by
/// uniform label noise at rate `1 - gamma'`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteWorld {
    p_x: ClassDistribution,
    p_pi: Array2<f64>,
    gamma_prime: f64,
}

impl DiscreteWorld {
    pub fn new(p_x: ClassDistribution, p_pi: Array2<f64>, gamma_prime: f64) -> Result<Self> {
        if p_pi.nrows() != p_x.len() {
            return Err(Error::LengthMismatch {
                expected: p_x.len(),
                got: p_pi.nrows(),
            });
        }
        for row in p_pi.rows() {
            ClassDistribution::new(row.to_vec())?;
        }
        if !(gamma_prime > 0.0 && gamma_prime < 1.0) {
            return Err(Error::Config(format!("gamma' must lie in (0, 1), got {gamma_prime}")));
        }
        Ok(Self { p_x, p_pi, gamma_prime })
    }

    /// Random world: Dirichlet(1) rows sharpened as `p^(1/temperature)`,
    /// then Sinkhorn-balanced so that the label marginal under uniform
    /// `p(x)` is exactly uniform.
    pub fn random<R: Rng + ?Sized>(
        num_x: usize,
        k: usize,
        gamma_prime: f64,
        temperature: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if num_x == 0 || k < 2 || !(temperature > 0.0) {
            return Err(Error::Config("world needs |X| >= 1, K >= 2, temperature > 0".into()));
        }
        let mut p = Array2::zeros((num_x, k));
        for mut row in p.rows_mut() {
            let draw = dirichlet_ones(k, rng);
            let sharp: Vec<f64> = draw.iter().map(|v| v.powf(1.0 / temperature)).collect();
            let n = normalize(&sharp)?;
            row.assign(&ndarray::ArrayView1::from(n.probs()));
        }
        balance_columns(&mut p)?;
        Self::new(ClassDistribution::uniform(num_x), p, gamma_prime)
    }

    /// |X| = 6, K = 3, gamma' = 0.7, temperature 0.3, uniform p(x).
    pub fn default_world(seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Self::random(6, 3, 0.7, 0.3, &mut rng)
    }

    pub fn num_x(&self) -> usize {
        self.p_x.len()
    }

    pub fn num_classes(&self) -> usize {
        self.p_pi.ncols()
    }

    pub fn gamma_prime(&self) -> f64 {
        self.gamma_prime
    }

    /// Uniform outlier likelihood `1/K`.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.num_classes() as f64
    }

    pub fn p_x(&self) -> &ClassDistribution {
        &self.p_x
    }

    pub fn p_pi(&self) -> &Array2<f64> {
        &self.p_pi
    }

    /// `p_data(y|x) = gamma' p_pi(y|x) + (1 - gamma') eps`.
    pub fn data_conditional(&self) -> Array2<f64> {
        let e = (1.0 - self.gamma_prime) * self.epsilon();
        self.p_pi.mapv(|v| self.gamma_prime * v + e)
    }

    /// `p_data(y) = sum_x p(x) p_data(y|x)`.
    pub fn label_marginal(&self) -> Vec<f64> {
        let cond = self.data_conditional();
        (0..self.num_classes())
            .map(|y| (0..self.num_x()).map(|x| self.p_x[x] * cond[[x, y]]).sum())
            .collect()
    }
}

/// Scales rows to sum to 1 and columns to the matching uniform marginal.
fn balance_columns(p: &mut Array2<f64>) -> Result<()> {
    let (n, k) = p.dim();
    let target = n as f64 / k as f64;
    for _ in 0..10_000 {
        for mut col in p.columns_mut() {
            let s = col.sum();
            col.mapv_inplace(|v| v * target / s);
        }
        for mut row in p.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        let dev = p
            .columns()
            .into_iter()
            .map(|c| (c.sum() - target).abs())
            .fold(0.0, f64::max);
        if dev < 1e-14 * n as f64 {
            return Ok(());
        }
    }
    Err(Error::Numerical("column balancing did not converge".into()))
}

/// Flat Dirichlet draw as normalized unit exponentials.
fn dirichlet_ones<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// A row-stochastic `|X| x K` table standing in for the classifier output.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTable {
    pub g: Array2<f64>,
}

impl ProbabilityTable {
    pub fn new(g: Array2<f64>) -> Result<Self> {
        for row in g.rows() {
            ClassDistribution::new(row.to_vec())?;
        }
        Ok(Self { g })
    }

    pub fn uniform(num_x: usize, k: usize) -> Self {
        Self {
            g: Array2::from_elem((num_x, k), 1.0 / k as f64),
        }
    }
}

/// Per-entry coefficient `c[x, y]` with `L = -sum c[x, y] log g[x, y]`.
fn loss_coefficients(w: &DiscreteWorld, lambda: f64) -> Array2<f64> {
    let cond = w.data_conditional();
    let marg = w.label_marginal();
    Array2::from_shape_fn(cond.dim(), |(x, y)| w.p_x[x] * (cond[[x, y]] - lambda * marg[y]))
}

/// Exact regularized loss by enumeration over `(x, y)`.
pub fn regularized_loss(t: &ProbabilityTable, w: &DiscreteWorld, lambda: f64) -> Result<f64> {
    if t.g.dim() != w.p_pi.dim() {
        return Err(Error::LengthMismatch {
            expected: w.p_pi.len(),
            got: t.g.len(),
        });
    }
    let cond = w.data_conditional();
    let marg = w.label_marginal();
    let mut ce = 0.0;
    let mut reg = 0.0;
    for x in 0..w.num_x() {
        for y in 0..w.num_classes() {
            let lg = t.g[[x, y]].max(LOG_CLIP).ln();
            ce -= w.p_x[x] * cond[[x, y]] * lg;
            reg += w.p_x[x] * marg[y] * lg;
        }
    }
    Ok(ce + lambda * reg)
}

/// `g*(x) = normalize((p_data(.|x) - lambda p_data(.))_+)`.
pub fn closed_form_g_star(w: &DiscreteWorld, lambda: f64) -> Result<ProbabilityTable> {
    let cond = w.data_conditional();
    let marg = w.label_marginal();
    let mut g = Array2::zeros(cond.dim());
    for x in 0..w.num_x() {
        let raw: Vec<f64> = (0..w.num_classes())
            .map(|y| (cond[[x, y]] - lambda * marg[y]).max(0.0))
            .collect();
        if raw.iter().all(|v| *v == 0.0) {
            return Err(Error::LambdaTooLarge { lambda, row: x });
        }
        let n = normalize(&raw)?;
        g.row_mut(x).assign(&ndarray::ArrayView1::from(n.probs()));
    }
    Ok(ProbabilityTable { g })
}

/// The regularization weight that recovers `p_pi`: `(1 - gamma') eps / p(y)`,
/// which is `1 - gamma'` under the uniform-marginal hypothesis.
pub fn lambda_star(w: &DiscreteWorld) -> Result<f64> {
    let eps = w.epsilon();
    let deviation = w
        .label_marginal()
        .iter()
        .map(|m| (m - eps).abs())
        .fold(0.0, f64::max);
    if deviation > MARGINAL_TOL {
        return Err(Error::NonUniformMarginal { deviation });
    }
    Ok(1.0 - w.gamma_prime)
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // pin the sum to exactly one against accumulated rounding
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        out.iter_mut().for_each(|x| *x /= s);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BruteForceConfig {
    pub iters: usize,
    pub step: f64,
    pub restarts: usize,
}

impl Default for BruteForceConfig {
    fn default() -> Self {
        Self {
            iters: 20_000,
            step: 1.0,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub table: ProbabilityTable,
    pub loss: f64,
    pub restart: usize,
}

/// Projected gradient descent on [`regularized_loss`] over the product of
/// row simplices, from `restarts` random interior starts. Each step is
/// preconditioned by the current row (the loss is very stiff near rows with
/// tiny entries) and followed by a Euclidean projection. Keeps the lowest
/// loss iterate; ties go to the earliest restart.
pub fn brute_force_optimize<R: Rng + ?Sized>(
    w: &DiscreteWorld,
    lambda: f64,
    cfg: &BruteForceConfig,
    rng: &mut R,
) -> Result<BruteForceResult> {
    if w.num_x() > 32 || w.num_classes() > 8 {
        return Err(Error::Config("brute force supports |X| <= 32 and K <= 8".into()));
    }
    if cfg.restarts == 0 || !(cfg.step > 0.0) {
        return Err(Error::Config("brute force needs restarts >= 1 and step > 0".into()));
    }
    let coef = loss_coefficients(w, lambda);
    let (nx, k) = coef.dim();
    let mut best: Option<BruteForceResult> = None;
    for restart in 0..cfg.restarts {
        let mut g = Array2::zeros((nx, k));
        for mut row in g.rows_mut() {
            let draw = dirichlet_ones(k, rng);
            // keep the start away from the boundary
            let interior: Vec<f64> = draw.iter().map(|v| 0.5 * v + 0.5 / k as f64).collect();
            row.assign(&ndarray::ArrayView1::from(&interior));
        }
        let mut table = ProbabilityTable { g };
        let mut best_here = (regularized_loss(&table, w, lambda)?, table.g.clone());
        for _ in 0..cfg.iters {
            let mut moved: f64 = 0.0;
            for x in 0..nx {
                // -grad scaled by g, minus its g-weighted mean so the step
                // stays tangent to the simplex
                let scaled: Vec<f64> = (0..k)
                    .map(|y| {
                        let gv = table.g[[x, y]];
                        coef[[x, y]] * gv / gv.max(LOG_CLIP)
                    })
                    .collect();
                let mean: f64 = scaled.iter().sum();
                let stepped: Vec<f64> = (0..k)
                    .map(|y| table.g[[x, y]] + cfg.step * (scaled[y] - mean * table.g[[x, y]]))
                    .collect();
                let proj = project_to_simplex(&stepped);
                for y in 0..k {
                    moved = moved.max((proj[y] - table.g[[x, y]]).abs());
                    table.g[[x, y]] = proj[y];
                }
            }
            let loss = regularized_loss(&table, w, lambda)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("regularized loss is {loss}")));
            }
            if loss < best_here.0 {
                best_here = (loss, table.g.clone());
            }
            if moved < 1e-16 {
                break;
            }
        }
        let candidate = BruteForceResult {
            table: ProbabilityTable { g: best_here.1 },
            loss: best_here.0,
            restart,
        };
        if best.as_ref().is_none_or(|b| candidate.loss < b.loss) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// One row of the lemma check report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub lambda: f64,
    pub brute_force_loss: f64,
    pub closed_form_loss: f64,
    pub tv_bf_vs_closed: f64,
    pub tv_closed_vs_pi: f64,
}

/// Runs both routes for every `lambda` and tabulates the comparison.
pub fn lemma_table<R: Rng + ?Sized>(
    w: &DiscreteWorld,
    lambdas: &[f64],
    cfg: &BruteForceConfig,
    rng: &mut R,
) -> Result<Vec<LemmaRow>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let closed = closed_form_g_star(w, lambda)?;
            let bf = brute_force_optimize(w, lambda, cfg, rng)?;
            Ok(LemmaRow {
                lambda,
                brute_force_loss: bf.loss,
                closed_form_loss: regularized_loss(&closed, w, lambda)?,
                tv_bf_vs_closed: max_row_tv(bf.table.g.view(), closed.g.view())?,
                tv_closed_vs_pi: max_row_tv(closed.g.view(), w.p_pi.view())?,
            })
        })
        .collect()
}
