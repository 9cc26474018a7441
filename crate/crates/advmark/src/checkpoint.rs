//! Checkpoints: a JSON manifest plus a blob of little-endian `f32` values.
//!
//! The manifest lists every tensor with its shape, byte offset and byte
//! length; tensors are packed contiguously in manifest order. Parameters come
//! first, in declaration order, followed by the Adam moments when optimizer
//! state is stored (`optimizer.m.<name>` then `optimizer.v.<name>`).

use std::fs;
use std::path::{Path, PathBuf};

use advmark_core::model::{ClassifierSpec, Model, ParamStore};
use advmark_core::optim::Adam;
use advmark_core::tensor::Tensor;
use advmark_core::train::{BestCheckpoint, TrainLog, TrainState};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{read_json, sha256_hex, write_file, write_json};
use crate::report::{read_train_log_csv, write_train_log_csv};

pub const FORMAT: &str = "advmark-checkpoint";
pub const VERSION: u32 = 1;

const M_PREFIX: &str = "optimizer.m.";
const V_PREFIX: &str = "optimizer.v.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Bytes from the start of the blob.
    pub offset: usize,
    /// Bytes; always `4 · numel`.
    pub length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    /// Blob file name, relative to the manifest.
    pub blob: String,
    pub blob_sha256: String,
    pub spec: ClassifierSpec,
    /// Master seed of the run that produced the parameters.
    pub seed: u64,
    /// Completed training epochs, when known.
    pub epoch: Option<usize>,
    /// Selection metric of a best checkpoint.
    pub metric: Option<f64>,
    /// Training track that produced the parameters, when known.
    pub adversarial: Option<bool>,
    /// Adam step count; present iff the moments are stored.
    pub optimizer_step: Option<u64>,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub seed: u64,
    pub epoch: Option<usize>,
    pub metric: Option<f64>,
    pub adversarial: Option<bool>,
    pub optimizer: Option<Adam<f32>>,
}

impl Checkpoint {
    pub fn new(model: Model<f32>, seed: u64) -> Self {
        Self {
            model,
            seed,
            epoch: None,
            metric: None,
            adversarial: None,
            optimizer: None,
        }
    }
}

/// Blob path paired with a manifest path: same stem, `.bin` extension.
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

fn encode(ck: &Checkpoint, blob_name: String) -> (CheckpointManifest, Vec<u8>) {
    let mut named: Vec<(String, &Tensor<f32>)> = ck
        .model
        .params()
        .iter()
        .map(|p| (p.name.clone(), &p.tensor))
        .collect();
    if let Some(opt) = &ck.optimizer {
        for (prefix, moments) in [(M_PREFIX, &opt.m), (V_PREFIX, &opt.v)] {
            for (p, t) in ck.model.params().iter().zip(moments) {
                named.push((format!("{prefix}{}", p.name), t));
            }
        }
    }
    let mut blob = Vec::new();
    let mut tensors = Vec::with_capacity(named.len());
    for (name, t) in named {
        let offset = blob.len();
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            length: blob.len() - offset,
        });
    }
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        blob: blob_name,
        blob_sha256: sha256_hex(&blob),
        spec: ck.model.spec().clone(),
        seed: ck.seed,
        epoch: ck.epoch,
        metric: ck.metric,
        adversarial: ck.adversarial,
        optimizer_step: ck.optimizer.as_ref().map(|o| o.step),
        tensors,
    };
    (manifest, blob)
}

/// Writes `path` (manifest) and its `.bin` blob.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let blob_file = blob_path(path);
    let name = blob_file
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("checkpoint path {} has no file name", path.display())))?
        .to_string();
    let (manifest, blob) = encode(ck, name);
    write_file(&blob_file, &blob)?;
    write_json(path, &manifest)
}

/// Reads and validates a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let manifest: CheckpointManifest = read_json(path)?;
    let bad = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(bad(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.version
        )));
    }
    let blob_file = path.with_file_name(&manifest.blob);
    let blob = fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;
    if sha256_hex(&blob) != manifest.blob_sha256 {
        return Err(bad("blob checksum mismatch".into()));
    }
    let mut cursor = 0;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        let numel: usize = e.shape.iter().product();
        if e.offset != cursor || e.length != 4 * numel || e.offset + e.length > blob.len() {
            return Err(bad(format!("tensor `{}` has an inconsistent byte range", e.name)));
        }
        let data = blob[e.offset..e.offset + e.length]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let t = Tensor::new(&e.shape, data).map_err(|err| bad(err.to_string()))?;
        tensors.push((e.name.clone(), t));
        cursor += e.length;
    }
    if cursor != blob.len() {
        return Err(bad(format!("{} trailing blob bytes", blob.len() - cursor)));
    }

    let n_params = tensors
        .iter()
        .position(|(name, _)| name.starts_with(M_PREFIX) || name.starts_with(V_PREFIX))
        .unwrap_or(tensors.len());
    let mut rest = tensors.split_off(n_params);
    let mut params = ParamStore::new();
    for (name, t) in tensors {
        params.insert(&name, t).map_err(|e| bad(e.to_string()))?;
    }
    let model = Model::from_params(manifest.spec.clone(), params).map_err(|e| bad(e.to_string()))?;

    let optimizer = match manifest.optimizer_step {
        None if rest.is_empty() => None,
        None => return Err(bad("moments stored without an optimizer step".into())),
        Some(step) => {
            let n = model.params().len();
            if rest.len() != 2 * n {
                return Err(bad(format!("expected {} moment tensors, found {}", 2 * n, rest.len())));
            }
            let v_part = rest.split_off(n);
            let check = |part: Vec<(String, Tensor<f32>)>, prefix: &str| -> Result<Vec<Tensor<f32>>> {
                part.into_iter()
                    .zip(model.params().iter())
                    .map(|((name, t), p)| {
                        if name != format!("{prefix}{}", p.name) {
                            return Err(bad(format!("unexpected moment tensor `{name}`")));
                        }
                        Ok(t)
                    })
                    .collect()
            };
            let m = check(rest, M_PREFIX)?;
            let v = check(v_part, V_PREFIX)?;
            let opt = Adam { step, m, v };
            opt.check(model.params()).map_err(|e| bad(e.to_string()))?;
            Some(opt)
        }
    };
    Ok(Checkpoint {
        model,
        seed: manifest.seed,
        epoch: manifest.epoch,
        metric: manifest.metric,
        adversarial: manifest.adversarial,
        optimizer,
    })
}

pub const FINAL_CHECKPOINT: &str = "final.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const TRAIN_LOG_JSON: &str = "train_log.json";
pub const TRAIN_LOG_CSV: &str = "train_log.csv";

/// Writes everything needed to resume: the final checkpoint with optimizer
/// state, the best checkpoint, and the log as JSON and CSV.
pub fn save_train_state(dir: &Path, state: &TrainState, seed: u64, adversarial: bool) -> Result<()> {
    save_checkpoint(
        &dir.join(FINAL_CHECKPOINT),
        &Checkpoint {
            model: state.model.clone(),
            seed,
            epoch: Some(state.epoch()),
            metric: None,
            adversarial: Some(adversarial),
            optimizer: Some(state.optimizer.clone()),
        },
    )?;
    if let Some(best) = &state.best {
        let model = Model::from_params(state.model.spec().clone(), best.params.clone())?;
        save_checkpoint(
            &dir.join(BEST_CHECKPOINT),
            &Checkpoint {
                model,
                seed,
                epoch: Some(best.epoch),
                metric: Some(best.metric),
                adversarial: Some(adversarial),
                optimizer: None,
            },
        )?;
    }
    write_json(&dir.join(TRAIN_LOG_JSON), &state.log)?;
    write_train_log_csv(&dir.join(TRAIN_LOG_CSV), &state.log)
}

/// Inverse of [`save_train_state`]; returns the state and its seed.
pub fn load_train_state(dir: &Path) -> Result<(TrainState, u64)> {
    let final_path = dir.join(FINAL_CHECKPOINT);
    let fin = load_checkpoint(&final_path)?;
    let optimizer = fin.optimizer.ok_or_else(|| Error::Checkpoint {
        path: final_path.clone(),
        message: "no optimizer state to resume from".into(),
    })?;
    let log: TrainLog = read_json(&dir.join(TRAIN_LOG_JSON))?;
    if fin.epoch != Some(log.len()) {
        return Err(Error::Checkpoint {
            path: final_path,
            message: format!("epoch {:?} disagrees with {} logged epochs", fin.epoch, log.len()),
        });
    }
    let best_path = dir.join(BEST_CHECKPOINT);
    let best = if best_path.exists() {
        let b = load_checkpoint(&best_path)?;
        let (Some(epoch), Some(metric)) = (b.epoch, b.metric) else {
            return Err(Error::Checkpoint {
                path: best_path,
                message: "best checkpoint lacks epoch or metric".into(),
            });
        };
        Some(BestCheckpoint {
            epoch,
            metric,
            params: b.model.into_params(),
        })
    } else {
        None
    };
    let csv_log = read_train_log_csv(&dir.join(TRAIN_LOG_CSV))?;
    if csv_log.len() != log.len() {
        return Err(Error::Report("train log CSV and JSON disagree".into()));
    }
    Ok((
        TrainState {
            model: fin.model,
            optimizer,
            log,
            best,
        },
        fin.seed,
    ))
}
