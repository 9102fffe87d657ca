mod common;

use std::path::Path;
use std::process::{Command, Output};

use flywheel::harness::{METRICS_FILE, PARTIAL_MARKER, SUMMARY_FILE};

fn flywheel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flywheel")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn data_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean.csv");
    let test = dir.path().join("test.csv");
    let noisy = dir.path().join("noisy.csv");
    let out = dir.path().join("run");

    let gen = |seed: &str, path: &Path| {
        flywheel(&[
            "gen-data", "--num-classes", "3", "--num-samples", "300", "--separation", "4", "--seed", seed, "--out",
            s(path),
        ])
    };
    assert!(gen("1", &clean).status.success());
    assert!(gen("2", &test).status.success());
    let o = flywheel(&[
        "inject-noise", "--input", s(&clean), "--kind", "symmetric", "--rate", "0.4", "--seed", "3", "--out", s(&noisy),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(&noisy).unwrap();
    assert!(header.starts_with("f0,f1,noisy_label,true_label"));

    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "cycles = 2\nwarmup_epochs = 2\n[data]\nsource = \"files\"\ntrain = {:?}\ntest = {:?}\n[opt_main]\nbatch_size = 32\n[opt_aux]\nbatch_size = 32\n",
            s(&noisy),
            s(&test)
        ),
    )
    .unwrap();
    let o = flywheel(&["train", "--config", s(&cfg), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["cycles"], 2);
    assert!(out.join(METRICS_FILE).exists() && out.join(SUMMARY_FILE).exists());

    let o = flywheel(&["eval", "--model", s(&out.join("f.ckpt")), "--data", s(&test)]);
    assert!(o.status.success());
    let eval: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(eval["samples"], 300);
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, common::tiny_config(&dir.path().join("run"))).unwrap();
    for bad in ["cycles=0", "no_such_key=1", "noise.rate=1.5"] {
        let o = flywheel(&["train", "--config", s(&cfg), "--set", bad]);
        assert_eq!(o.status.code(), Some(2), "{bad}");
    }
    let o = flywheel(&["train", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(o.status.code(), Some(2));

    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "f0,noisy_label\n0.5,1\n0.7,0\n").unwrap();
    let o = flywheel(&[
        "inject-noise", "--input", s(&csv), "--kind", "symmetric", "--rate", "0.1", "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn numerical_abort_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, common::tiny_config(&out)).unwrap();
    let o = flywheel(&[
        "train", "--config", s(&cfg), "--set", "opt_main.learning_rate=1e300", "--set", "opt_main.momentum=0.0",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join(PARTIAL_MARKER).exists());
}

#[test]
fn ablate_writes_one_row_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("abl");
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, common::tiny_config(&out)).unwrap();
    let o = flywheel(&["ablate", "--config", s(&cfg), "--seeds", "1,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("ablation.json")).unwrap()).unwrap();
    let names: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "no_cr", "no_aux", "eps_fixed"]);
    assert!(out.join("no_aux").join("seed-2").join(METRICS_FILE).exists());
}

#[test]
fn lemma_check_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("lemma.json");
    let o = flywheel(&["lemma-check", "--grid", "2", "--iters", "3000", "--json", s(&json)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda_star"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(json).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
}
