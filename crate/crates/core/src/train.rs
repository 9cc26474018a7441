//! Clean and mixed-batch adversarial training with Adam.

use alloc::format;
use alloc::vec::Vec;

use crate::attack::{pgd_attack, AttackConfig};
use crate::data::{apply_augment, batch_iterator, draw_augment, DatasetSplit};
use crate::error::{EvalError, ModelError, TensorError, TrainError};
use crate::eval::{evaluate, loss_and_accuracy, EvalOptions};
use crate::model::{argmax_rows, Classifier, Model, ParamStore};
use crate::optim::Adam;
use crate::rng::{rng_from_seed, SeedStreams};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerTag {
    #[default]
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerTag,
    pub adversarial: bool,
    /// Fraction λ of each batch replaced by PGD examples.
    pub mix_ratio: f64,
    pub attack: AttackConfig,
    /// Master seed of init, shuffle, augmentation and attack streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 20,
            optimizer: OptimizerTag::Adam,
            adversarial: false,
            mix_ratio: 0.5,
            attack: AttackConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) {
            return Err(TrainError::Config(format!(
                "mix_ratio must lie in [0, 1], got {}",
                self.mix_ratio
            )));
        }
        if self.adversarial {
            self.attack
                .validate()
                .map_err(|e| TrainError::Config(format!("attack: {e}")))?;
        }
        Ok(())
    }

    pub fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }

    /// Adversarial samples in a batch of `n`: `⌈λ·n⌉`.
    pub fn adversarial_count(&self, n: usize) -> usize {
        if !self.mixes_adversarial() {
            return 0;
        }
        (libm::ceil(self.mix_ratio * n as f64) as usize).min(n)
    }

    /// Adversarial track with a positive mix. At `λ = 0` training, validation
    /// and checkpoint selection are those of clean training.
    pub fn mixes_adversarial(&self) -> bool {
        self.adversarial && self.mix_ratio > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub adv_val_acc: Option<f64>,
    pub seconds: f64,
}

/// One record per completed epoch.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Parameters of the epoch with the best selection metric so far.
#[derive(Clone, Debug, PartialEq)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub metric: f64,
    pub params: ParamStore<f32>,
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model<f32>,
    pub optimizer: Adam<f32>,
    pub log: TrainLog,
    pub best: Option<BestCheckpoint>,
}

impl TrainState {
    pub fn new(model: Model<f32>) -> Self {
        let optimizer = Adam::new(model.params());
        Self {
            model,
            optimizer,
            log: TrainLog::default(),
            best: None,
        }
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.log.len()
    }

    /// Model carrying the best parameters, or the current ones before any
    /// epoch has completed.
    pub fn best_model(&self) -> Model<f32> {
        match &self.best {
            Some(b) => Model::from_params(self.model.spec().clone(), b.params.clone())
                .expect("best parameters share the model layout"),
            None => self.model.clone(),
        }
    }
}

/// Observers of a training run. The clock is injected so the core stays
/// free of platform time.
pub trait TrainHooks {
    /// Monotonic seconds.
    fn now(&mut self) -> f64 {
        0.0
    }

    fn on_batch(&mut self, _epoch: usize, _batch: usize, _loss: f64) {}

    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

pub struct NoHooks;

impl TrainHooks for NoHooks {}

/// Final and best models plus the log of a finished run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub best_epoch: Option<usize>,
}

impl TrainOutcome {
    pub fn final_model(&self) -> &Model<f32> {
        &self.state.model
    }

    pub fn best_model(&self) -> Model<f32> {
        self.state.best_model()
    }

    pub fn log(&self) -> &TrainLog {
        &self.state.log
    }
}

fn check_splits(model: &Model<f32>, train: &DatasetSplit, val: &DatasetSplit) -> Result<(), TrainError> {
    for split in [train, val] {
        let dims = split.image_dims().ok_or(crate::error::DataError::Empty)?;
        if dims != model.input_dims() || split.num_classes() != model.num_classes() {
            return Err(TrainError::Config(format!(
                "{} split has {:?} images with {} classes, model expects {:?} with {}",
                split.tag().as_str(),
                dims,
                split.num_classes(),
                model.input_dims(),
                model.num_classes()
            )));
        }
    }
    Ok(())
}

fn eval_error(e: EvalError, epoch: usize) -> TrainError {
    match e {
        EvalError::Model(m) => TrainError::Model(m),
        EvalError::Data(d) => TrainError::Data(d),
        EvalError::Attack { batch, source } => TrainError::Attack { epoch, batch, source },
        EvalError::Roster(r) => TrainError::Config(r),
    }
}

/// Augmented images of `indices`, one draw per sample in batch order.
fn augmented_batch(
    split: &DatasetSplit,
    indices: &[usize],
    rng: &mut crate::rng::Rng,
) -> Result<Tensor<f32>, TrainError> {
    let images: Vec<Tensor<f32>> = indices
        .iter()
        .map(|&i| apply_augment(split.samples()[i].image(), draw_augment(rng)))
        .collect();
    let refs: Vec<&Tensor<f32>> = images.iter().collect();
    Ok(Tensor::stack(&refs).map_err(crate::error::DataError::from)?)
}

/// Replaces the first `count` images of `images` by PGD examples.
fn mix_adversarial(
    model: &Model<f32>,
    images: Tensor<f32>,
    labels: &[usize],
    count: usize,
    attack: &AttackConfig,
    seed: u64,
) -> Result<Tensor<f32>, crate::error::AttackError> {
    let n = labels.len();
    let per = images.numel() / n;
    let head = images.slice_outer(0, count)?;
    let adv = pgd_attack(model, &head, &labels[..count], attack, seed)?;
    let shape = images.shape().to_vec();
    let mut data = images.into_data();
    data[..count * per].copy_from_slice(adv.adversarial.data());
    Ok(Tensor::new(&shape, data)?)
}

/// Runs the next epoch, appends its record and updates the best checkpoint.
pub fn train_epoch(
    state: &mut TrainState,
    train: &DatasetSplit,
    val: &DatasetSplit,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<EpochRecord, TrainError> {
    cfg.validate()?;
    check_splits(&state.model, train, val)?;
    state.optimizer.check(state.model.params())?;
    let start = hooks.now();
    let e = state.epoch();
    let epoch = e + 1;
    let streams = cfg.streams();
    let mut aug_rng = rng_from_seed(streams.augment(e));
    let (mut loss_sum, mut correct) = (0.0f64, 0usize);

    for (b, batch) in batch_iterator(train, cfg.batch_size, Some(streams.shuffle(e)))?.enumerate() {
        let mut images = augmented_batch(train, &batch.indices, &mut aug_rng)?;
        let n_adv = cfg.adversarial_count(batch.labels.len());
        if n_adv > 0 {
            images = mix_adversarial(&state.model, images, &batch.labels, n_adv, &cfg.attack, streams.attack(e, b))
                .map_err(|source| TrainError::Attack { epoch, batch: b, source })?;
        }
        // Tapes with finite checks report NaN as a tensor error; both paths
        // surface as divergence.
        let out = match state.model.loss_and_gradients(&images, &batch.labels) {
            Ok(out) if out.loss.is_finite() => out,
            Ok(_) | Err(ModelError::Tensor(TensorError::NonFinite { .. })) => {
                return Err(TrainError::Diverged { epoch, batch: b });
            }
            Err(e) => return Err(e.into()),
        };
        state
            .optimizer
            .update(state.model.params_mut(), &out.grads, cfg.learning_rate)?;
        let n = batch.labels.len();
        loss_sum += out.loss as f64 * n as f64;
        correct += argmax_rows(&out.logits)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
        hooks.on_batch(epoch, b, out.loss as f64);
    }

    let (val_loss, val_acc) = loss_and_accuracy(&state.model, val, cfg.batch_size).map_err(|e| eval_error(e, epoch))?;
    let adv_val_acc = if cfg.mixes_adversarial() {
        let opts = EvalOptions {
            batch_size: cfg.batch_size,
            seed: streams.validation_attack(e),
            blur_sigma: None,
        };
        let report = evaluate(&state.model, "", val, Some(&cfg.attack), &opts).map_err(|e| eval_error(e, epoch))?;
        report.adversarial_accuracy
    } else {
        None
    };
    let n = train.len() as f64;
    let record = EpochRecord {
        epoch,
        loss: loss_sum / n,
        acc: correct as f64 / n,
        val_loss,
        val_acc,
        adv_val_acc,
        seconds: hooks.now() - start,
    };
    let metric = adv_val_acc.unwrap_or(val_acc);
    // Ties on the selection metric go to the higher clean validation accuracy.
    let improves = |b: &BestCheckpoint| {
        let best_val = state.log.epochs.get(b.epoch - 1).map_or(f64::NEG_INFINITY, |r| r.val_acc);
        metric > b.metric || (metric == b.metric && val_acc > best_val)
    };
    if state.best.as_ref().is_none_or(improves) {
        state.best = Some(BestCheckpoint {
            epoch,
            metric,
            params: state.model.params().clone(),
        });
    }
    state.log.epochs.push(record);
    hooks.on_epoch(&record);
    Ok(record)
}

/// Continues `state` until `cfg.epochs` epochs are complete.
pub fn fit(
    mut state: TrainState,
    train: &DatasetSplit,
    val: &DatasetSplit,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    while state.epoch() < cfg.epochs {
        train_epoch(&mut state, train, val, cfg, hooks)?;
    }
    let best_epoch = state.best.as_ref().map(|b| b.epoch);
    Ok(TrainOutcome { state, best_epoch })
}

/// Clean training from `model`; best checkpoint by clean validation accuracy.
pub fn train_clean(
    model: Model<f32>,
    train: &DatasetSplit,
    val: &DatasetSplit,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    if cfg.adversarial {
        return Err(TrainError::Config("train_clean needs adversarial = false".into()));
    }
    fit(TrainState::new(model), train, val, cfg, hooks)
}

/// Mixed-batch adversarial training from `model`; best checkpoint by
/// adversarial validation accuracy, ties broken by clean validation accuracy.
pub fn train_adversarial(
    model: Model<f32>,
    train: &DatasetSplit,
    val: &DatasetSplit,
    cfg: &TrainConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome, TrainError> {
    if !cfg.adversarial {
        return Err(TrainError::Config("train_adversarial needs adversarial = true".into()));
    }
    fit(TrainState::new(model), train, val, cfg, hooks)
}

#[cfg(test)]
mod tests;
