use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flywheel::config::ExperimentConfig;
use flywheel::datagen::{self, GeneratorKind, GeneratorSpec, NoiseKind, NoiseSpec};
use flywheel::harness;
use flywheel::metrics::{refurbishment_accuracy, test_accuracy};
use flywheel::nonparam::BruteForceConfig;
use flywheel::{Classifier, Error};

#[derive(Parser)]
#[command(name = "flywheel", version, about = "Learning with noisy labels via two interconnected EM cycles")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a noise-free synthetic dataset CSV.
    GenData(GenData),
    /// Corrupt the labels of a dataset CSV.
    InjectNoise(InjectNoise),
    /// Run one experiment from a config file.
    Train(RunArgs),
    /// Score a saved checkpoint on a dataset CSV.
    Eval(Eval),
    /// Run the full method and its ablations on one dataset.
    Ablate(Ablate),
    /// Compare brute-force and closed-form optima on a small discrete world.
    LemmaCheck(LemmaCheck),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    GaussianBlobs,
    ConcentricRings,
}

#[derive(Args)]
struct GenData {
    #[arg(long, value_enum, default_value = "gaussian-blobs")]
    kind: Kind,
    #[arg(long)]
    num_classes: usize,
    #[arg(long)]
    num_samples: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Symmetric,
    Asymmetric,
    InstanceDependent,
}

#[derive(Args)]
struct InjectNoise {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    num_classes: Option<usize>,
    #[arg(long, value_enum)]
    kind: Noise,
    #[arg(long)]
    rate: f64,
    /// Comma-separated 1-based targets for asymmetric noise (default: cyclic).
    #[arg(long, value_delimiter = ',')]
    mapping: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.1)]
    tau_sigma: f64,
    #[arg(long)]
    include_self: bool,
    #[arg(long, default_value_t = 1.0)]
    projection_scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config value, e.g. `--set opt_main.learning_rate=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut o = self.set.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(c) = self.cycles {
            o.push(format!("cycles={c}"));
        }
        if let Some(d) = &self.output_dir {
            o.push(format!("output_dir={:?}", d.display().to_string()));
        }
        ExperimentConfig::from_file(&self.config, &o)
    }
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct Ablate {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated experiment seeds (default: the config seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct LemmaCheck {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of grid intervals between 0 and lambda_star.
    #[arg(long, default_value_t = 6)]
    grid: usize,
    #[arg(long, default_value_t = 20_000)]
    iters: usize,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.into()))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::GenData(a) => {
            let spec = GeneratorSpec {
                kind: match a.kind {
                    Kind::GaussianBlobs => GeneratorKind::GaussianBlobs,
                    Kind::ConcentricRings => GeneratorKind::ConcentricRings,
                },
                num_classes: a.num_classes,
                num_samples: a.num_samples,
                dim: a.dim,
                separation: a.separation,
                seed: a.seed,
            };
            datagen::save_csv(&datagen::generate(&spec)?, &a.out)?;
        }
        Cmd::InjectNoise(a) => {
            let data = datagen::load_csv(&a.input, a.num_classes)?;
            let spec = NoiseSpec {
                kind: match a.kind {
                    Noise::Symmetric => NoiseKind::Symmetric,
                    Noise::Asymmetric => NoiseKind::Asymmetric,
                    Noise::InstanceDependent => NoiseKind::InstanceDependent,
                },
                rate: a.rate,
                mapping: a.mapping,
                tau_sigma: a.tau_sigma,
                include_self: a.include_self,
                projection_scale: a.projection_scale,
                seed: a.seed,
            };
            datagen::save_csv(&datagen::inject(&data, &spec)?, &a.out)?;
        }
        Cmd::Train(a) => {
            let cfg = a.load()?;
            let r = harness::run_experiment(&cfg)?;
            println!("{}", json(&r.summary)?);
            eprintln!("wrote {}", r.output_dir.display());
        }
        Cmd::Eval(a) => {
            let f = Classifier::load(&a.model)?;
            let data = datagen::load_csv(&a.data, Some(f.num_classes()))?;
            let acc = test_accuracy(&f, &data)?;
            let refurb = match data.true_labels() {
                Some(_) => Some(refurbishment_accuracy(&f, &data)?),
                None => None,
            };
            println!(
                "{}",
                json(&serde_json::json!({ "accuracy": acc, "true_label_accuracy": refurb, "samples": data.len() }))?
            );
        }
        Cmd::Ablate(a) => {
            let cfg = a.run.load()?;
            let seeds = a.seeds.unwrap_or_else(|| vec![cfg.seed]);
            let out = cfg.resolved_output_dir();
            let rows = harness::ablate(&cfg, &seeds, &out)?;
            print!("{}", harness::format_ablation_table(&rows));
        }
        Cmd::LemmaCheck(a) => {
            let bf = BruteForceConfig {
                iters: a.iters,
                step: a.step,
                restarts: a.restarts,
            };
            let report = harness::lemma_report(a.seed, a.grid, &bf)?;
            print!("{}", harness::format_lemma_table(&report));
            if let Some(p) = a.json {
                std::fs::write(p, json(&report)?)?;
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::ClassOutOfRange { .. } => 2,
        Error::Numerical(_) | Error::NonFinite(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
