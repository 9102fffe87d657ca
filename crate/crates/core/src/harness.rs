//! Experiment orchestration: warm-up, the four-step cycle, metric emission,
//! artifacts, ablation sweeps and the lemma report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aux_em::{
    aux_e_step, epsilons_from, estimate_t, estimate_tc, resample_labels, train_aux, FeatureScale,
    TransitionEstimate,
};
use crate::config::{Ablation, DataConfig, ExperimentConfig};
use crate::datagen::{generate, ground_truth_corrupted_t, ground_truth_t, inject, load_csv, GeneratorSpec};
use crate::error::{Error, Result};
use crate::main_em::{
    e_step, m_step_objective, mixture_log_likelihood, train_main, update_gamma, MainCycleConfig, MainMode,
    MainTargets,
};
use crate::metrics::{refurbishment_accuracy, selection_auc, t_estimation_error, test_accuracy, CycleMetrics};
use crate::model::{Classifier, SgdState};
use crate::nonparam::{
    brute_force_optimize, lambda_star, lemma_table, BruteForceConfig, DiscreteWorld, LemmaRow,
};
use crate::plot;
use crate::prob::{clamp_gamma, max_row_tv, CorruptionMatrix, MixtureState, NoisyDataset, TrainingView};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const PARTIAL_MARKER: &str = "PARTIAL";

/// Independent 64-bit seed for purpose `tag` derived from `base`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(tag);
    rng.next_u64()
}

const STREAM_INIT_G: u64 = 1;
const STREAM_INIT_F: u64 = 2;
const STREAM_TRAIN: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: NoisyDataset,
    pub test: Option<NoisyDataset>,
}

fn split_rows(data: &NoisyDataset, range: std::ops::Range<usize>) -> Result<NoisyDataset> {
    let x = data.features().slice(s![range.clone(), ..]).to_owned();
    let noisy = data.noisy_labels()[range.clone()].to_vec();
    let truth = data.true_labels().map(|t| t[range].to_vec());
    NoisyDataset::new(x, noisy, truth, data.num_classes())
}

/// Generates or loads the data, then injects noise into the training split.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<Splits> {
    let (train, test) = match &cfg.data {
        DataConfig::Generated { generator, n_test } => {
            let all = generate(&GeneratorSpec {
                num_samples: generator.num_samples + n_test,
                ..*generator
            })?;
            let n = generator.num_samples;
            (split_rows(&all, 0..n)?, Some(split_rows(&all, n..all.len())?))
        }
        DataConfig::Files { train, test, num_classes } => {
            let tr = load_csv(train, *num_classes)?;
            let k = tr.num_classes();
            let te = test.as_ref().map(|p| load_csv(p, Some(k))).transpose()?;
            (tr, te)
        }
    };
    let train = match &cfg.noise {
        Some(spec) => inject(&train, spec)?,
        None => train,
    };
    Ok(Splits { train, test })
}

/// Everything the flywheel carries from one cycle to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct FlywheelState {
    pub g: Classifier,
    pub f: Classifier,
    pub sgd_g: SgdState,
    pub sgd_f: SgdState,
    pub mix: MixtureState,
    pub cycles_done: usize,
}

/// Plain cross-entropy on the noisy labels for both networks, then
/// `gamma_0` = training accuracy of `f` against the noisy labels (clamped)
/// and every outlier likelihood at `1/K`.
pub fn warmup<R: rand::Rng + ?Sized>(
    g: &Classifier,
    f: &Classifier,
    data: &TrainingView<'_>,
    cfg: &ExperimentConfig,
    rng: &mut R,
) -> Result<FlywheelState> {
    let plain = MainCycleConfig {
        lambda_cr: 0.0,
        mode: MainMode::Reweight,
        epochs_per_cycle: cfg.warmup_epochs,
        ..cfg.main
    };
    let ones = vec![1.0; data.len()];
    let mut sgd_g = SgdState::new(g.param_count());
    let mut sgd_f = SgdState::new(f.param_count());
    let targets = MainTargets::Reweighted { clean_prob: &ones };
    let (g, _) = train_main(g, &mut sgd_g, data, targets, &plain, &cfg.opt_main, rng)?;
    let (f, _) = train_main(f, &mut sgd_f, data, targets, &plain, &cfg.opt_aux, rng)?;
    let gamma0 = initial_gamma(&f, data)?;
    let mix = MixtureState::uniform(gamma0, data.len(), data.num_classes);
    Ok(FlywheelState {
        g,
        f,
        sgd_g,
        sgd_f,
        mix,
        cycles_done: 0,
    })
}

/// Training accuracy of `f` against the noisy labels, clamped.
pub fn initial_gamma(f: &Classifier, data: &TrainingView<'_>) -> Result<f64> {
    let pred = f.predict(data.features)?;
    let hits = pred.iter().zip(data.noisy_labels).filter(|(a, b)| a == b).count();
    Ok(clamp_gamma(hits as f64 / data.len() as f64))
}

/// What one cycle produced besides the new state.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub tc: Option<TransitionEstimate>,
    pub t: Option<TransitionEstimate>,
    pub main_loss: f64,
    pub aux_loss: Option<f64>,
}

/// One cycle on training data only:
/// (1) cleanness posteriors from `g`; (2) true-class posteriors from the
/// previous `f`; (3) train `f`, estimate `T`/`T_c`, refresh the outlier
/// likelihoods and resample labels; (4) update `gamma` and train `g`.
pub fn flywheel_step<R: rand::Rng + ?Sized>(
    state: &mut FlywheelState,
    data: &TrainingView<'_>,
    cfg: &ExperimentConfig,
    scale: &FeatureScale,
    rng: &mut R,
) -> Result<StepOutput> {
    let main_cfg = MainCycleConfig {
        lambda_cr: cfg.effective_lambda_cr(),
        ..cfg.main
    };
    // (1)
    let clean_prob = e_step(&state.g, data, &state.mix)?;

    if cfg.has(Ablation::NoAux) {
        // (4) only, on cleanness-weighted noisy labels
        let gamma = update_gamma(&clean_prob)?;
        state.mix = state.mix.with_gamma(gamma);
        let targets = MainTargets::Reweighted { clean_prob: &clean_prob };
        let (g, losses) = train_main(&state.g, &mut state.sgd_g, data, targets, &main_cfg, &cfg.opt_main, rng)?;
        state.g = g;
        state.cycles_done += 1;
        return Ok(StepOutput {
            tc: None,
            t: None,
            main_loss: *losses.last().expect("at least one epoch"),
            aux_loss: None,
        });
    }

    // (2) with the pre-update f
    let post = aux_e_step(&state.f, data, &clean_prob, &cfg.aux, scale, rng)?;

    // (3)
    let (f, aux_losses) = train_aux(
        &state.f,
        &mut state.sgd_f,
        data,
        post.class_post.view(),
        &cfg.aux,
        scale,
        &cfg.opt_aux,
        rng,
    )?;
    state.f = f;
    let t = estimate_t(post.class_post.view(), data.noisy_labels)?;
    let tc = estimate_tc(&clean_prob, post.f_outs.view(), data.noisy_labels)?;
    let eps = if cfg.eps_fixed() {
        vec![1.0 / data.num_classes as f64; data.len()]
    } else {
        let raw = state.f.predict_proba(data.features)?;
        epsilons_from(raw.view(), &tc.matrix, data.noisy_labels)?
    };
    let resampled = resample_labels(&state.f, data)?;

    // (4)
    let gamma = update_gamma(&clean_prob)?;
    state.mix = MixtureState::new(gamma, eps)?;
    let targets = match cfg.main.mode {
        MainMode::Resample => MainTargets::Resampled(&resampled),
        MainMode::Reweight => MainTargets::Reweighted { clean_prob: &clean_prob },
    };
    let (g, losses) = train_main(&state.g, &mut state.sgd_g, data, targets, &main_cfg, &cfg.opt_main, rng)?;
    state.g = g;
    state.cycles_done += 1;
    Ok(StepOutput {
        tc: Some(tc),
        t: Some(t),
        main_loss: *losses.last().expect("at least one epoch"),
        aux_loss: aux_losses.last().copied(),
    })
}

/// The network used for inference: `f`, or `g` when the auxiliary cycle is
/// ablated away.
pub fn inference_network<'s>(state: &'s FlywheelState, cfg: &ExperimentConfig) -> &'s Classifier {
    if cfg.has(Ablation::NoAux) {
        &state.g
    } else {
        &state.f
    }
}

/// Reference matrices for the transition-error metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub t: CorruptionMatrix,
    pub corrupted: Vec<Option<Vec<f64>>>,
}

impl GroundTruth {
    pub fn from_train(train: &NoisyDataset) -> Option<Self> {
        Some(Self {
            t: ground_truth_t(train).ok()?,
            corrupted: ground_truth_corrupted_t(train).ok()?,
        })
    }
}

/// Mean row L1 over the rows where `truth` is defined.
fn partial_row_l1(est: &CorruptionMatrix, truth: &[Option<Vec<f64>>]) -> Option<f64> {
    let rows: Vec<f64> = truth
        .iter()
        .enumerate()
        .filter_map(|(y, r)| {
            r.as_ref()
                .map(|r| r.iter().enumerate().map(|(c, v)| (est.get(y, c) - v).abs()).sum())
        })
        .collect();
    (!rows.is_empty()).then(|| rows.iter().sum::<f64>() / rows.len() as f64)
}

/// Cycle-end diagnostics. Reads true labels of `train`, so it is kept apart
/// from [`flywheel_step`].
pub fn evaluate_cycle(
    state: &FlywheelState,
    step: &StepOutput,
    train: &NoisyDataset,
    test: Option<&NoisyDataset>,
    truth: Option<&GroundTruth>,
    cfg: &ExperimentConfig,
) -> Result<CycleMetrics> {
    let view = train.training_view();
    let q_end = e_step(&state.g, &view, &state.mix)?;
    let auc = match train.clean_mask() {
        Ok(mask) => selection_auc(&q_end, &mask)?,
        Err(_) => None,
    };
    let net = inference_network(state, cfg);
    let refurb_acc = match train.true_labels() {
        Some(_) => Some(refurbishment_accuracy(net, train)?),
        None => None,
    };
    let test_acc = test.map(|t| test_accuracy(net, t)).transpose()?;
    let (t_row_l1, t_full_row_l1, tc_corrupted_row_l1) = match (truth, &step.tc, &step.t) {
        (Some(gt), Some(tc), Some(t)) => (
            Some(t_estimation_error(&tc.matrix, &gt.t)?),
            Some(t_estimation_error(&t.matrix, &gt.t)?),
            partial_row_l1(&tc.matrix, &gt.corrupted),
        ),
        _ => (None, None, None),
    };
    let eps = state.mix.epsilons();
    let n = eps.len() as f64;
    Ok(CycleMetrics {
        cycle: state.cycles_done,
        gamma: state.mix.gamma(),
        selection_auc: auc,
        refurb_acc,
        test_acc,
        t_row_l1,
        t_full_row_l1,
        tc_corrupted_row_l1,
        mix_ll: mixture_log_likelihood(&state.g, &view, &state.mix)?,
        m_step_objective: m_step_objective(&state.g, &view, &state.mix, &q_end)?,
        mean_clean_prob: q_end.iter().sum::<f64>() / n,
        eps_min: eps.iter().copied().fold(f64::INFINITY, f64::min),
        eps_mean: constant_or_mean(eps),
        eps_max: eps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        main_loss: step.main_loss,
        aux_loss: step.aux_loss,
    })
}

/// Mean that is exact for a constant vector.
fn constant_or_mean(v: &[f64]) -> f64 {
    match v.first() {
        Some(&a) if v.iter().all(|x| *x == a) => a,
        _ => v.iter().sum::<f64>() / v.len() as f64,
    }
}

/// Aggregate written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cycles: usize,
    /// `"f"` or `"g"`.
    pub inference_network: String,
    pub ablations: Vec<String>,
    pub final_metrics: CycleMetrics,
    pub best_test_acc: Option<f64>,
    /// Mean test accuracy over the last (up to) ten cycles.
    pub avg_test_acc_last10: Option<f64>,
    pub best_refurb_acc: Option<f64>,
    pub best_selection_auc: Option<f64>,
}

impl Summary {
    pub fn from_history(history: &[CycleMetrics], cfg: &ExperimentConfig) -> Result<Self> {
        let last = history.last().ok_or(Error::Empty("cycle history"))?;
        let best = |get: fn(&CycleMetrics) -> Option<f64>| -> Option<f64> {
            history.iter().filter_map(get).reduce(f64::max)
        };
        let tail = &history[history.len().saturating_sub(10)..];
        let tail_acc: Vec<f64> = tail.iter().filter_map(|m| m.test_acc).collect();
        Ok(Self {
            cycles: history.len(),
            inference_network: if cfg.has(Ablation::NoAux) { "g" } else { "f" }.into(),
            ablations: cfg.ablations.iter().map(|a| a.name().to_string()).collect(),
            final_metrics: last.clone(),
            best_test_acc: best(|m| m.test_acc),
            avg_test_acc_last10: (!tail_acc.is_empty()).then(|| tail_acc.iter().sum::<f64>() / tail_acc.len() as f64),
            best_refurb_acc: best(|m| m.refurb_acc),
            best_selection_auc: best(|m| m.selection_auc),
        })
    }
}

/// `K x K` matrix CSV with 1-based class headers.
pub fn write_matrix_csv(m: &CorruptionMatrix, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let k = m.num_classes();
    w.write_record((1..=k).map(|c| c.to_string()))?;
    for row in m.entries().rows() {
        w.write_record(row.iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<CorruptionMatrix> {
    let mut r = csv::Reader::from_path(path)?;
    let k = r.headers()?.len();
    let mut vals = Vec::with_capacity(k * k);
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for v in rec.iter() {
            vals.push(v.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: i as u64 + 2,
                msg: e.to_string(),
            })?);
        }
    }
    let m = Array2::from_shape_vec((vals.len() / k.max(1), k), vals).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    CorruptionMatrix::new(m)
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub history: Vec<CycleMetrics>,
    pub state: FlywheelState,
    pub output_dir: PathBuf,
}

/// Runs the whole pipeline and writes every artifact into the output
/// directory. A failure after warm-up leaves a `PARTIAL` marker behind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let splits = prepare_data(cfg)?;
    let train = &splits.train;
    let n = train.len();
    cfg.opt_main.validate(Some(n))?;
    cfg.opt_aux.validate(Some(n))?;
    let out = cfg.resolved_output_dir();
    fs::create_dir_all(&out)?;
    let _ = fs::remove_file(out.join(PARTIAL_MARKER));
    fs::write(out.join(RESOLVED_CONFIG_FILE), cfg.to_toml_string()?)?;

    let result = run_in_dir(cfg, &splits, &out);
    if let Err(e) = &result {
        fs::write(out.join(PARTIAL_MARKER), format!("{e}\n"))?;
    }
    result
}

fn run_in_dir(cfg: &ExperimentConfig, splits: &Splits, out: &Path) -> Result<ExperimentResult> {
    let train = &splits.train;
    let view = train.training_view();
    let (d, k) = (train.dim(), train.num_classes());
    let g0 = Classifier::new(cfg.model, d, k, derive_seed(cfg.seed, STREAM_INIT_G))?;
    let f0 = Classifier::new(cfg.model, d, k, derive_seed(cfg.seed, STREAM_INIT_F))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STREAM_TRAIN);
    let scale = FeatureScale::from_features(train.features());
    let truth = GroundTruth::from_train(train);

    let mut state = warmup(&g0, &f0, &view, cfg, &mut rng)?;
    let mut metrics_out = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    let mut history = Vec::with_capacity(cfg.cycles);
    let mut last_tc = None;
    for _ in 0..cfg.cycles {
        let step = flywheel_step(&mut state, &view, cfg, &scale, &mut rng)?;
        let m = evaluate_cycle(&state, &step, train, splits.test.as_ref(), truth.as_ref(), cfg)?;
        serde_json::to_writer(&mut metrics_out, &m).map_err(|e| Error::Io(e.into()))?;
        metrics_out.write_all(b"\n")?;
        metrics_out.flush()?;
        if let (Some(tc), Some(t)) = (&step.tc, &step.t) {
            write_matrix_csv(&tc.matrix, out.join(format!("tc_cycle_{:03}.csv", m.cycle)))?;
            write_matrix_csv(&t.matrix, out.join(format!("t_cycle_{:03}.csv", m.cycle)))?;
            last_tc = Some(tc.matrix.clone());
        }
        history.push(m);
    }
    state.g.save(out.join("g.ckpt"))?;
    state.f.save(out.join("f.ckpt"))?;
    let summary = Summary::from_history(&history, cfg)?;
    fs::write(
        out.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.into()))?,
    )?;
    if cfg.plots {
        fs::write(out.join("curves.svg"), plot::learning_curves_svg(&history))?;
        if let Some(tc) = &last_tc {
            fs::write(out.join("tc_final.svg"), plot::heatmap_svg(tc, "estimated T_c"))?;
        }
        if let Some(gt) = &truth {
            fs::write(out.join("t_truth.svg"), plot::heatmap_svg(&gt.t, "ground-truth T"))?;
        }
    }
    Ok(ExperimentResult {
        summary,
        history,
        state,
        output_dir: out.to_path_buf(),
    })
}

/// Named variant of an ablation sweep.
pub const ABLATION_VARIANTS: [&str; 4] = ["full", "no_cr", "no_aux", "eps_fixed"];

/// Config for one ablation variant; `no_aux` also switches the main network
/// to reweighting.
pub fn variant_config(base: &ExperimentConfig, variant: &str, seed: u64, out: &Path) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.ablations.clear();
    match variant {
        "full" => {}
        "no_cr" => {
            cfg.ablations.insert(Ablation::NoCr);
        }
        "no_aux" => {
            cfg.ablations.insert(Ablation::NoAux);
            cfg.main.mode = MainMode::Reweight;
        }
        "eps_fixed" => {
            cfg.ablations.insert(Ablation::EpsFixed);
        }
        other => return Err(Error::Config(format!("unknown ablation variant {other:?}"))),
    }
    cfg.output_dir = Some(out.join(variant).join(format!("seed-{seed}")));
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub final_test_acc: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
}

/// Runs every variant for every seed, variants concurrently.
pub fn ablate(base: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablate needs at least one seed".into()));
    }
    let cfgs: Vec<Vec<ExperimentConfig>> = ABLATION_VARIANTS
        .iter()
        .map(|v| seeds.iter().map(|&s| variant_config(base, v, s, out)).collect())
        .collect::<Result<_>>()?;
    let results: Vec<Result<Vec<f64>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfgs
            .iter()
            .map(|runs| {
                scope.spawn(move || {
                    runs.iter()
                        .map(|c| {
                            let r = run_experiment(c)?;
                            r.summary
                                .final_metrics
                                .test_acc
                                .ok_or_else(|| Error::Config("ablation needs a test split".into()))
                        })
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ablation worker panicked"))
            .collect()
    });
    let rows = ABLATION_VARIANTS
        .iter()
        .zip(results)
        .map(|(v, accs)| {
            let accs = accs?;
            let (mean, std) = mean_std(&accs);
            Ok(AblationRow {
                variant: v.to_string(),
                final_test_acc: accs,
                mean,
                std,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out)?;
    fs::write(
        out.join("ablation.json"),
        serde_json::to_string_pretty(&rows).map_err(|e| Error::Io(e.into()))?,
    )?;
    Ok(rows)
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut s = format!("{:<10} {:>10} {:>10} {:>6}\n", "variant", "test_acc", "std", "seeds");
    for r in rows {
        s.push_str(&format!(
            "{:<10} {:>10.4} {:>10.4} {:>6}\n",
            r.variant,
            r.mean,
            r.std,
            r.final_test_acc.len()
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub world_seed: u64,
    pub lambda_star: f64,
    pub rows: Vec<LemmaRow>,
    /// Brute force at `lambda_star` against `p_pi`.
    pub tv_bf_vs_pi_at_star: f64,
    /// Brute force at `lambda = 0` against the data conditional.
    pub tv_bf_vs_data_at_zero: f64,
}

/// Lemma check on the default world: a grid of `grid + 1` weights from 0 to
/// `lambda_star`, plus the two limiting comparisons.
pub fn lemma_report(world_seed: u64, grid: usize, bf: &BruteForceConfig) -> Result<LemmaReport> {
    let w = DiscreteWorld::default_world(world_seed)?;
    let ls = lambda_star(&w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(world_seed);
    rng.set_stream(1);
    let grid = grid.max(1);
    let lambdas: Vec<f64> = (0..=grid).map(|i| ls * i as f64 / grid as f64).collect();
    let rows = lemma_table(&w, &lambdas, bf, &mut rng)?;
    let at_star = brute_force_optimize(&w, ls, bf, &mut rng)?;
    let at_zero = brute_force_optimize(&w, 0.0, bf, &mut rng)?;
    Ok(LemmaReport {
        world_seed,
        lambda_star: ls,
        rows,
        tv_bf_vs_pi_at_star: max_row_tv(at_star.table.g.view(), w.p_pi().view())?,
        tv_bf_vs_data_at_zero: max_row_tv(at_zero.table.g.view(), w.data_conditional().view())?,
    })
}

pub fn format_lemma_table(r: &LemmaReport) -> String {
    let mut s = format!(
        "world seed {}  lambda_star {:.6}\n{:>10} {:>14} {:>14} {:>12} {:>12}\n",
        r.world_seed, r.lambda_star, "lambda", "bf_loss", "closed_loss", "tv(bf,g*)", "tv(g*,p_pi)"
    );
    for row in &r.rows {
        s.push_str(&format!(
            "{:>10.6} {:>14.10} {:>14.10} {:>12.3e} {:>12.3e}\n",
            row.lambda, row.brute_force_loss, row.closed_form_loss, row.tv_bf_vs_closed, row.tv_closed_vs_pi
        ));
    }
    s.push_str(&format!(
        "tv(bf at lambda_star, p_pi) = {:.3e}\ntv(bf at 0, p_data) = {:.3e}\n",
        r.tv_bf_vs_pi_at_star, r.tv_bf_vs_data_at_zero
    ));
    s
}
