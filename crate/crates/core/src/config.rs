//! Experiment configuration: TOML file plus `key=value` overrides.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aux_em::AuxCycleConfig;
use crate::datagen::{GeneratorSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::main_em::{MainCycleConfig, MainMode};
use crate::model::{Architecture, OptimizerConfig};

/// Environment variable naming the directory under which runs without an
/// explicit `output_dir` are written.
pub const OUTPUT_ROOT_ENV: &str = "LNL_FLYWHEEL_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Drop the confidence regularizer from the main loss.
    NoCr,
    /// Skip the auxiliary cycle; the main network is trained on cleanness-
    /// weighted noisy labels and used for evaluation.
    NoAux,
    /// Keep every outlier likelihood at `1/K`.
    EpsFixed,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoCr => "no_cr",
            Ablation::NoAux => "no_aux",
            Ablation::EpsFixed => "eps_fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Synthetic data; the first `num_samples` draws are the training split
    /// and `n_test` further draws form the noise-free test split.
    Generated { generator: GeneratorSpec, n_test: usize },
    /// Dataset CSV files. A test file without true labels is scored against
    /// its `noisy_label` column.
    Files {
        train: PathBuf,
        test: Option<PathBuf>,
        num_classes: Option<usize>,
    },
}

fn default_warmup() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub main: MainCycleConfig,
    #[serde(default)]
    pub aux: AuxCycleConfig,
    #[serde(default)]
    pub opt_main: OptimizerConfig,
    #[serde(default)]
    pub opt_aux: OptimizerConfig,
    /// Architecture of both networks.
    #[serde(default = "default_model")]
    pub model: Architecture,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    pub cycles: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ablations: BTreeSet<Ablation>,
    /// Also write SVG plots.
    #[serde(default)]
    pub plots: bool,
}

fn default_model() -> Architecture {
    Architecture::Linear
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    /// Confidence-regularizer weight after ablations.
    pub fn effective_lambda_cr(&self) -> f64 {
        if self.has(Ablation::NoCr) {
            0.0
        } else {
            self.main.lambda_cr
        }
    }

    pub fn eps_fixed(&self) -> bool {
        self.has(Ablation::EpsFixed) || self.main.epsilon_mode == crate::main_em::EpsilonMode::FixedUniform
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.data {
            DataConfig::Generated { generator, .. } => Some(generator.num_classes),
            DataConfig::Files { num_classes, .. } => *num_classes,
        }
    }

    /// `output_dir`, or `$LNL_FLYWHEEL_OUTPUT_ROOT/seed-<seed>` (root
    /// defaulting to `runs`).
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            root.join(format!("seed-{}", self.seed))
        })
    }

    /// Checks everything that can be checked before touching data.
    pub fn validate(&self) -> Result<()> {
        if self.cycles == 0 {
            return Err(Error::Config("cycles must be at least 1".into()));
        }
        if self.warmup_epochs == 0 {
            return Err(Error::Config("warmup_epochs must be at least 1".into()));
        }
        if self.has(Ablation::NoAux) && self.main.mode != MainMode::Reweight {
            return Err(Error::Config("the no_aux ablation requires main.mode = \"reweight\"".into()));
        }
        self.main.validate()?;
        self.aux.validate()?;
        if let Architecture::Mlp { hidden: 0 } = self.model {
            return Err(Error::Config("model.hidden must be positive".into()));
        }
        let n_train = match &self.data {
            DataConfig::Generated { generator, n_test } => {
                generator.validate()?;
                if *n_test == 0 {
                    return Err(Error::Config("data.n_test must be positive".into()));
                }
                Some(generator.num_samples)
            }
            DataConfig::Files { num_classes, .. } => {
                if num_classes.is_some_and(|k| k < 2) {
                    return Err(Error::Config("data.num_classes must be at least 2".into()));
                }
                None
            }
        };
        self.opt_main.validate(n_train)?;
        self.opt_aux.validate(n_train)?;
        if let (Some(noise), Some(k)) = (&self.noise, self.num_classes()) {
            noise.validate(k)?;
        }
        Ok(())
    }
}

/// Applies `a.b.c=value` to a TOML table. The value is read as a TOML
/// literal when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key {key:?}")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?} passes through a non-table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
