//! Per-command run manifests.
//!
//! A manifest records what a command did in a location-independent form: the
//! resolved config and its hash, crate versions, seed-stream roots, and the
//! SHA-256 of every input and output file (paths relative to the command's
//! output directory, or bare file names for inputs). Files carrying wall-clock
//! timings are listed without a hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use advmark_core::rng::SeedStreams;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::json::{read_json, sha256_hex, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Versions {
    pub advmark: String,
    pub advmark_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            advmark: env!("CARGO_PKG_VERSION").into(),
            advmark_core: advmark_core::VERSION.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRecord {
    pub dataset: u64,
    pub master: u64,
    /// Root seed of every named stream under `master`.
    pub streams: BTreeMap<String, u64>,
}

impl SeedRecord {
    pub fn new(config: &RunConfig) -> Self {
        let master = config.train.seed;
        let streams = [
            SeedStreams::INIT,
            SeedStreams::SHUFFLE,
            SeedStreams::AUGMENT,
            SeedStreams::ATTACK,
            SeedStreams::VALIDATION_ATTACK,
            "evaluation",
        ]
        .into_iter()
        .map(|name| (name.to_string(), advmark_core::rng::derive_seed(master, name, &[])))
        .collect();
        Self {
            dataset: config.dataset.seed,
            master,
            streams,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: String,
    /// Absent for files with wall-clock content.
    pub sha256: Option<String>,
}

/// Model identity attached to training and attack manifests.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRecord {
    pub id: String,
    pub arch: String,
    /// Training track of the parameters, when known.
    pub adversarial: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    /// Absent for commands that take no config.
    pub config_sha256: Option<String>,
    pub config: Option<RunConfig>,
    pub versions: Versions,
    pub seeds: Option<SeedRecord>,
    pub models: Vec<ModelRecord>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            config_sha256: Some(config.sha256()),
            config: Some(config.clone()),
            seeds: Some(SeedRecord::new(config)),
            ..Self::without_config(command)
        }
    }

    pub fn without_config(command: &str) -> Self {
        Self {
            command: command.into(),
            config_sha256: None,
            config: None,
            versions: Versions::default(),
            seeds: None,
            models: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input by file name and content hash.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.add_named_input(name, path)
    }

    /// Records an input under an explicit name.
    pub fn add_named_input(&mut self, name: String, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.push(FileRecord {
            path: name,
            sha256: Some(sha256_hex(&bytes)),
        });
        Ok(())
    }

    /// Hashes `rel` paths under `dir` as outputs, in the given order.
    pub fn add_outputs(&mut self, dir: &Path, rel: &[PathBuf]) -> Result<()> {
        for r in rel {
            let p = dir.join(r);
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            self.outputs.push(FileRecord {
                path: rel_string(r),
                sha256: Some(sha256_hex(&bytes)),
            });
        }
        Ok(())
    }

    /// Lists outputs whose content varies between identical runs.
    pub fn add_volatile_outputs(&mut self, rel: &[PathBuf]) {
        for r in rel {
            self.outputs.push(FileRecord {
                path: rel_string(r),
                sha256: None,
            });
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    /// Outputs listed in the manifest but absent from `dir`.
    pub fn missing_outputs(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|f| !dir.join(&f.path).is_file())
            .map(|f| dir.join(&f.path).display().to_string())
            .collect()
    }
}

fn rel_string(p: &Path) -> String {
    p.to_string_lossy().replace('\\', "/")
}
