#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use advmark_core::data::{stratified_split, synth_dataset, SplitRatios, Splits, SynthConfig};
use advmark_core::model::{ArchConfig, ClassifierSpec, VggConfig};

/// 8×8 synthetic data small enough for debug-speed tests.
pub fn tiny_splits(per_class: usize) -> Splits {
    let all = synth_dataset(&SynthConfig {
        seed: 3,
        per_class,
        resolution: 8,
        noise_std: 0.05,
    })
    .unwrap();
    stratified_split(&all, SplitRatios::default(), 3).unwrap()
}

pub fn tiny_vgg() -> ClassifierSpec {
    ClassifierSpec {
        resolution: 8,
        channels: 3,
        classes: 5,
        arch: ArchConfig::Vgg(VggConfig {
            widths: vec![4],
            convs_per_block: 1,
            hidden: 8,
        }),
    }
}

/// Config document for a tiny VGG pipeline; `extra` is spliced into the
/// `train` object.
pub const TINY_CONFIG: &str = r#"{
  "dataset": {"source": {"kind": "synthetic", "per_class": 10}, "resolution": 8, "seed": 1},
  "model": {"arch": "vgg", "widths": [4], "convs_per_block": 1, "hidden": 8},
  "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.01, "attack": {"steps": 2}},
  "attack": {"steps": 3},
  "output": "runs"
}
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn advmark(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_advmark"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Runs a command and asserts exit status 0.
pub fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = advmark(args, cwd);
    assert_eq!(code(&out), 0, "advmark {args:?} failed: {}", stderr(&out));
    out
}
