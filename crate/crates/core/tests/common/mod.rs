#![allow(dead_code)]

use std::path::Path;

use flywheel::ExperimentConfig;

/// Four 2-D Gaussian blobs, 4000 training and 1000 test samples.
pub const BLOBS: &str = r#"
[data]
source = "generated"
n_test = 1000

[data.generator]
kind = "gaussian_blobs"
num_classes = 4
num_samples = 4000
dim = 2
separation = 4.0
seed = 1
"#;

pub fn blobs_config(noise: &str, cycles: usize, out: &Path) -> ExperimentConfig {
    let text = format!(
        "cycles = {cycles}\nseed = 0\noutput_dir = {:?}\n{BLOBS}\n[noise]\nseed = 2\n{noise}\n",
        out.display().to_string()
    );
    ExperimentConfig::from_toml_str(&text, &[]).expect("valid config")
}

/// A small, fast config for plumbing tests.
pub fn tiny_config(out: &Path) -> String {
    format!(
        r#"cycles = 3
seed = 5
warmup_epochs = 2
output_dir = {:?}

[data]
source = "generated"
n_test = 100

[data.generator]
kind = "gaussian_blobs"
num_classes = 3
num_samples = 300
dim = 2
separation = 4.0
seed = 1

[noise]
kind = "symmetric"
rate = 0.4
seed = 2

[opt_main]
batch_size = 32

[opt_aux]
batch_size = 32
"#,
        out.display().to_string()
    )
}
