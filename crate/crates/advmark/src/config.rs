//! Declarative run configuration.
//!
//! Unknown keys are rejected; every omitted field takes its documented
//! default, and the fully resolved document is echoed into each manifest.

use std::path::{Path, PathBuf};

use advmark_core::attack::AttackConfig;
use advmark_core::data::{stratified_split, synth_dataset, DatasetSplit, SplitRatios, Splits, SynthConfig};
use advmark_core::eval::EvalOptions;
use advmark_core::model::{ArchConfig, Architecture, ClassifierSpec};
use advmark_core::rng::derive_seed;
use advmark_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::load_image_directory;
use crate::error::{Error, Result};
use crate::json::{parse_json, sha256_hex, to_json_bytes};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "default_per_class")]
        per_class: usize,
        #[serde(default = "default_noise_std")]
        noise_std: f64,
    },
    /// `root/<class>/*.png`; relative paths resolve against the config file.
    Directory { path: PathBuf },
}

fn default_per_class() -> usize {
    SynthConfig::default().per_class
}

fn default_noise_std() -> f64 {
    SynthConfig::default().noise_std
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            per_class: default_per_class(),
            noise_std: default_noise_std(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    /// Square side length images are generated at or resized to.
    pub resolution: usize,
    /// Seed of synthetic generation and of the stratified split.
    pub seed: u64,
    pub split: SplitRatios,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::default(),
            resolution: 32,
            seed: 0,
            split: SplitRatios::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub batch_size: usize,
    /// Gaussian-blur preprocessing defense applied before prediction.
    pub blur_sigma: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            blur_sigma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    /// Architecture tag and hyperparameters; input geometry and class count
    /// come from the dataset.
    pub model: ArchConfig,
    pub train: TrainConfig,
    /// Attack used by `attack` and `transfer`.
    pub attack: AttackConfig,
    pub eval: EvalConfig,
    /// Output root; relative paths resolve against the config file.
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            model: ArchConfig::default_for(Architecture::Vit),
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
            eval: EvalConfig::default(),
            output: PathBuf::from("runs"),
        }
    }
}

/// A parsed config and the directory relative paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dataset.resolution == 0 {
            return Err(Error::Config("dataset.resolution must be positive".into()));
        }
        self.dataset
            .split
            .validate()
            .map_err(|e| Error::Config(format!("dataset.split: {e}")))?;
        if let DatasetSource::Synthetic { per_class, noise_std } = self.dataset.source {
            if per_class == 0 || !(noise_std >= 0.0 && noise_std.is_finite()) {
                return Err(Error::Config(
                    "dataset.source needs per_class ≥ 1 and finite noise_std ≥ 0".into(),
                ));
            }
        }
        self.train
            .validate()
            .map_err(|e| Error::Config(format!("train: {e}")))?;
        self.attack
            .validate()
            .map_err(|e| Error::Config(format!("attack: {e}")))?;
        if self.eval.batch_size == 0 {
            return Err(Error::Config("eval.batch_size must be at least 1".into()));
        }
        if let Some(s) = self.eval.blur_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("eval.blur_sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Canonical JSON of the resolved config.
    pub fn canonical_json(&self) -> Vec<u8> {
        to_json_bytes(self)
    }

    pub fn sha256(&self) -> String {
        sha256_hex(&self.canonical_json())
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            batch_size: self.eval.batch_size,
            seed: derive_seed(self.train.seed, "evaluation", &[]),
            blur_sigma: self.eval.blur_sigma,
        }
    }

    pub fn synth_config(&self) -> Option<SynthConfig> {
        match self.dataset.source {
            DatasetSource::Synthetic { per_class, noise_std } => Some(SynthConfig {
                seed: self.dataset.seed,
                per_class,
                resolution: self.dataset.resolution,
                noise_std,
            }),
            DatasetSource::Directory { .. } => None,
        }
    }

    pub fn classifier_spec(&self, data: &DatasetSplit) -> Result<ClassifierSpec> {
        let dims = data.image_dims().ok_or(advmark_core::error::DataError::Empty)?;
        let spec = ClassifierSpec {
            resolution: self.dataset.resolution,
            channels: dims[0],
            classes: data.num_classes(),
            arch: self.model.clone(),
        };
        spec.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        Ok(spec)
    }
}

impl LoadedConfig {
    /// Reads and validates `path`.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = parse_json(&text, path)?;
        config.validate()?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output)
    }

    /// The whole dataset before splitting.
    pub fn load_dataset(&self) -> Result<DatasetSplit> {
        match &self.config.dataset.source {
            DatasetSource::Synthetic { .. } => {
                Ok(synth_dataset(&self.config.synth_config().expect("synthetic source"))?)
            }
            DatasetSource::Directory { path } => load_image_directory(&self.resolve(path), self.config.dataset.resolution),
        }
    }

    pub fn load_splits(&self) -> Result<Splits> {
        let all = self.load_dataset()?;
        Ok(stratified_split(&all, self.config.dataset.split, self.config.dataset.seed)?)
    }
}
