//! Clean and adversarial accuracy, confusion matrices, and the
//! cross-architecture transfer matrix.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attack::{pgd_attack, sign_noise, AttackConfig, AttackResult};
use crate::data::{batch_iterator, gaussian_blur, DatasetSplit};
use crate::error::{DataError, EvalError};
use crate::model::{argmax_rows, forward, predict, Classifier, Model};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

/// `counts[t·K + p]` samples of true class `t` predicted as `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_predictions(classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut m = Self::new(classes);
        m.record(truth, predicted);
        m
    }

    pub fn record(&mut self, truth: &[usize], predicted: &[usize]) {
        for (&t, &p) in truth.iter().zip(predicted) {
            self.counts[t * self.classes + p] += 1;
        }
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// Per class; 0 when the class is never predicted.
    pub fn precision(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| ratio(self.get(c, c), self.col_sum(c)))
            .collect()
    }

    /// Per class; 0 when the class has no samples.
    pub fn recall(&self) -> Vec<f64> {
        (0..self.classes)
            .map(|c| ratio(self.get(c, c), self.row_sum(c)))
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Optional preprocessing defense plus evaluation plumbing.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct EvalOptions {
    pub batch_size: usize,
    /// Seed root for attack random starts.
    pub seed: u64,
    /// Gaussian blur applied to every input (clean and adversarial) right
    /// before prediction. Attacks are crafted against the undefended model.
    pub blur_sigma: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            batch_size: 32,
            seed: 0,
            blur_sigma: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub samples: usize,
    pub clean_accuracy: f64,
    pub adversarial_accuracy: Option<f64>,
    pub clean_confusion: ConfusionMatrix,
    pub adversarial_confusion: Option<ConfusionMatrix>,
    pub attack: Option<AttackConfig>,
    pub blur_sigma: Option<f64>,
    /// Mean per-sample L∞ and L2 of the adversarial perturbations.
    pub mean_linf: Option<f64>,
    pub mean_l2: Option<f64>,
}

impl EvalReport {
    pub fn clean_precision(&self) -> Vec<f64> {
        self.clean_confusion.precision()
    }

    pub fn clean_recall(&self) -> Vec<f64> {
        self.clean_confusion.recall()
    }
}

fn defend(images: Tensor<f32>, blur_sigma: Option<f64>) -> Result<Tensor<f32>, EvalError> {
    match blur_sigma {
        Some(s) => Ok(gaussian_blur(&images, s)?),
        None => Ok(images),
    }
}

fn check_compatible<C: Classifier<f32> + ?Sized>(model: &C, split: &DatasetSplit) -> Result<(), EvalError> {
    let dims = split.image_dims().ok_or(DataError::Empty)?;
    if dims != model.input_dims() || split.num_classes() != model.num_classes() {
        return Err(EvalError::Roster(format!(
            "model expects {:?} with {} classes, split has {:?} with {} classes",
            model.input_dims(),
            model.num_classes(),
            dims,
            split.num_classes()
        )));
    }
    Ok(())
}

/// Mean cross-entropy and accuracy on a split.
pub fn loss_and_accuracy<C: Classifier<f32> + ?Sized>(
    model: &C,
    split: &DatasetSplit,
    batch_size: usize,
) -> Result<(f64, f64), EvalError> {
    check_compatible(model, split)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for batch in batch_iterator(split, batch_size, None)? {
        let logits = forward(model, &batch.images)?;
        let (losses, _) = crate::autodiff::cross_entropy_rows(&logits, &batch.labels)
            .map_err(crate::error::ModelError::from)?;
        loss += losses.iter().map(|&l| l as f64).sum::<f64>();
        correct += argmax_rows(&logits)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let n = split.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Clean (and, with `attack`, white-box adversarial) evaluation.
pub fn evaluate<C: Classifier<f32> + ?Sized>(
    model: &C,
    model_id: &str,
    split: &DatasetSplit,
    attack: Option<&AttackConfig>,
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    Ok(evaluate_detailed(model, model_id, split, attack, opts)?.0)
}

/// [`evaluate`] that also returns the attack result of every batch, in split
/// order. Batch `b` is attacked with seed `derive_seed(opts.seed,
/// "eval-attack", [b])`.
pub fn evaluate_detailed<C: Classifier<f32> + ?Sized>(
    model: &C,
    model_id: &str,
    split: &DatasetSplit,
    attack: Option<&AttackConfig>,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<AttackResult<f32>>), EvalError> {
    check_compatible(model, split)?;
    let k = model.num_classes();
    let mut clean = ConfusionMatrix::new(k);
    let mut adv = attack.map(|_| ConfusionMatrix::new(k));
    let mut results = Vec::new();
    let (mut linf, mut l2) = (0.0, 0.0);
    for (b, batch) in batch_iterator(split, opts.batch_size, None)?.enumerate() {
        let clean_pred = predict(model, &defend(batch.images.clone(), opts.blur_sigma)?)?;
        clean.record(&batch.labels, &clean_pred);
        if let (Some(cfg), Some(m)) = (attack, adv.as_mut()) {
            let seed = derive_seed(opts.seed, "eval-attack", &[b as u64]);
            let r = pgd_attack(model, &batch.images, &batch.labels, cfg, seed)
                .map_err(|source| EvalError::Attack { batch: b, source })?;
            linf += r.metrics.iter().map(|m| m.linf).sum::<f64>();
            l2 += r.metrics.iter().map(|m| m.l2).sum::<f64>();
            let pred = if opts.blur_sigma.is_some() {
                predict(model, &defend(r.adversarial.clone(), opts.blur_sigma)?)?
            } else {
                r.adversarial_predictions.clone()
            };
            m.record(&batch.labels, &pred);
            results.push(r);
        }
    }
    let n = split.len() as f64;
    let report = EvalReport {
        model: model_id.into(),
        dataset: split.tag().as_str().into(),
        samples: split.len(),
        clean_accuracy: clean.accuracy(),
        adversarial_accuracy: adv.as_ref().map(ConfusionMatrix::accuracy),
        clean_confusion: clean,
        adversarial_confusion: adv,
        attack: attack.copied(),
        blur_sigma: opts.blur_sigma,
        mean_linf: attack.map(|_| linf / n),
        mean_l2: attack.map(|_| l2 / n),
    };
    Ok((report, results))
}

/// Accuracy of every target on adversarial sets crafted once per source.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransferMatrix {
    /// Roster ids; sources and targets are the same roster.
    pub models: Vec<String>,
    /// `cells[s][t]`: accuracy of target `t` on examples crafted against
    /// source `s`. The diagonal is white-box.
    pub cells: Vec<Vec<f64>>,
    /// `noise[t]`: accuracy of model `t` under uniform ±ε sign noise.
    pub noise: Vec<f64>,
    /// Clean accuracy of every model.
    pub clean: Vec<f64>,
    pub attack: AttackConfig,
}

impl TransferMatrix {
    pub fn cell(&self, source: usize, target: usize) -> f64 {
        self.cells[source][target]
    }
}

/// Transfer study over one roster. The attack seed of batch `b` depends only
/// on `(seed, b)`, so reordering the roster reorders the matrix.
pub fn transfer_eval(
    roster: &[(String, &Model<f32>)],
    split: &DatasetSplit,
    attack: &AttackConfig,
    seed: u64,
    batch_size: usize,
) -> Result<TransferMatrix, EvalError> {
    if roster.len() < 2 {
        return Err(EvalError::Roster(format!(
            "transfer needs at least 2 models, got {}",
            roster.len()
        )));
    }
    let ids: BTreeSet<&str> = roster.iter().map(|(id, _)| id.as_str()).collect();
    if ids.len() != roster.len() {
        return Err(EvalError::Roster("model ids must be unique".into()));
    }
    let first = roster[0].1;
    for (id, m) in roster {
        if m.input_dims() != first.input_dims() || m.num_classes() != first.num_classes() {
            return Err(EvalError::Roster(format!(
                "`{id}` does not share the input shape and class count of `{}`",
                roster[0].0
            )));
        }
        check_compatible(*m, split)?;
    }
    attack.validate().map_err(|source| EvalError::Attack { batch: 0, source })?;

    let batches: Vec<_> = batch_iterator(split, batch_size, None)?.collect();
    let accuracy = |model: &Model<f32>, sets: &[Tensor<f32>]| -> Result<f64, EvalError> {
        let mut correct = 0usize;
        for (images, batch) in sets.iter().zip(&batches) {
            correct += predict(model, images)?
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
        }
        Ok(correct as f64 / split.len() as f64)
    };

    let clean_sets: Vec<Tensor<f32>> = batches.iter().map(|b| b.images.clone()).collect();
    let noise_sets: Vec<Tensor<f32>> = batches
        .iter()
        .enumerate()
        .map(|(b, batch)| sign_noise(&batch.images, attack.epsilon, derive_seed(seed, "transfer-noise", &[b as u64])))
        .collect();
    let mut cells = Vec::with_capacity(roster.len());
    for (_, source) in roster {
        let mut adv_sets = Vec::with_capacity(batches.len());
        for (b, batch) in batches.iter().enumerate() {
            let s = derive_seed(seed, "transfer-attack", &[b as u64]);
            let r = pgd_attack(*source, &batch.images, &batch.labels, attack, s)
                .map_err(|source| EvalError::Attack { batch: b, source })?;
            adv_sets.push(r.adversarial);
        }
        let row = roster
            .iter()
            .map(|(_, target)| accuracy(target, &adv_sets))
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(row);
    }
    Ok(TransferMatrix {
        models: roster.iter().map(|(id, _)| id.clone()).collect(),
        cells,
        noise: roster
            .iter()
            .map(|(_, m)| accuracy(m, &noise_sets))
            .collect::<Result<_, _>>()?,
        clean: roster
            .iter()
            .map(|(_, m)| accuracy(m, &clean_sets))
            .collect::<Result<_, _>>()?,
        attack: *attack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Graph, Var};
    use crate::data::{Sample, SplitTag};
    use crate::error::ModelError;
    use crate::model::{Architecture, ClassifierSpec};

    /// Predicts the class whose index equals the rounded mean pixel × (K−1).
    struct MeanReader;

    impl Classifier<f32> for MeanReader {
        fn input_dims(&self) -> [usize; 3] {
            [1, 2, 2]
        }

        fn num_classes(&self) -> usize {
            3
        }

        fn logits(&self, g: &mut Graph<f32>, images: Var) -> Result<Var, ModelError> {
            let n = g.shape(images)[0];
            let flat = g.reshape(images, &[n, 4])?;
            // logit_k = −(mean − k/2)² expanded: k·mean − k²/4, up to a shared term.
            let w = g.constant(Tensor::new(&[4, 3], vec![0.0, 0.25, 0.5, 0.0, 0.25, 0.5, 0.0, 0.25, 0.5, 0.0, 0.25, 0.5])?);
            let b = g.constant(Tensor::new(&[3], vec![0.0, -0.25, -1.0])?);
            let z = g.matmul(flat, w)?;
            let z = g.scale(z, 10.0)?;
            let bz = g.scale(b, 10.0)?;
            Ok(g.add(z, bz)?)
        }
    }

    fn reader_split() -> DatasetSplit {
        let samples = [(0.0, 0), (0.5, 1), (1.0, 2), (0.45, 1)]
            .iter()
            .enumerate()
            .map(|(i, &(v, l))| Sample::new(Tensor::full(&[1, 2, 2], v), l, format!("s{i}")).unwrap())
            .collect();
        DatasetSplit::new(samples, vec!["a".into(), "b".into(), "c".into()], SplitTag::Test).unwrap()
    }

    #[test]
    fn perfect_model_gives_diagonal_confusion() {
        let r = evaluate(&MeanReader, "reader", &reader_split(), None, &EvalOptions::default()).unwrap();
        assert_eq!(r.clean_accuracy, 1.0);
        assert_eq!(r.clean_confusion.counts, [1, 0, 0, 0, 2, 0, 0, 0, 1]);
        assert_eq!(r.adversarial_accuracy, None);
        assert_eq!(r.clean_precision(), [1.0; 3]);
    }

    #[test]
    fn confusion_matrix_consistency() {
        let m = ConfusionMatrix::from_predictions(3, &[0, 0, 1, 2, 2, 2], &[0, 1, 1, 2, 0, 2]);
        assert_eq!(m.row_sum(2), 3);
        assert_eq!(m.accuracy(), 4.0 / 6.0);
        assert_eq!(m.precision(), [0.5, 0.5, 1.0]);
        assert_eq!(m.recall(), [0.5, 1.0, 2.0 / 3.0]);
        assert_eq!(ConfusionMatrix::new(2).accuracy(), 0.0);
    }

    #[test]
    fn zero_budget_attack_reproduces_clean_evaluation() {
        let spec = ClassifierSpec {
            resolution: 2,
            channels: 1,
            classes: 3,
            arch: crate::model::ArchConfig::Vgg(crate::model::VggConfig {
                widths: vec![2],
                convs_per_block: 1,
                hidden: 4,
            }),
        };
        let model = Model::<f32>::new(spec, 1).unwrap();
        let split = reader_split();
        let cfg = AttackConfig {
            epsilon: 0.0,
            ..AttackConfig::default()
        };
        let r = evaluate(&model, "m", &split, Some(&cfg), &EvalOptions::default()).unwrap();
        assert_eq!(r.adversarial_accuracy, Some(r.clean_accuracy));
        assert_eq!(r.adversarial_confusion.as_ref(), Some(&r.clean_confusion));

        let t = transfer_eval(
            &[("a".into(), &model), ("b".into(), &model)],
            &split,
            &cfg,
            3,
            2,
        )
        .unwrap();
        for row in &t.cells {
            for (c, &clean) in row.iter().zip(&t.clean) {
                assert_eq!(*c, clean);
            }
        }
    }

    #[test]
    fn duplicate_roster_gives_equal_cells() {
        let model = Model::<f32>::new(ClassifierSpec::new(Architecture::Vgg), 5).unwrap();
        let data = crate::data::synth_dataset(&crate::data::SynthConfig {
            seed: 1,
            per_class: 2,
            resolution: 32,
            noise_std: 0.05,
        })
        .unwrap();
        let t = transfer_eval(
            &[("x".into(), &model), ("y".into(), &model)],
            &data,
            &AttackConfig {
                steps: 2,
                ..AttackConfig::default()
            },
            0,
            4,
        )
        .unwrap();
        assert_eq!(t.cells.len(), 2);
        let v = t.cells[0][0];
        assert!(t.cells.iter().flatten().all(|&c| c == v));
        assert_eq!(t.noise[0], t.noise[1]);
        assert!(t.cells.iter().flatten().chain(&t.noise).all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn roster_errors() {
        let a = Model::<f32>::new(ClassifierSpec::new(Architecture::Vgg), 0).unwrap();
        let mut small = ClassifierSpec::new(Architecture::Vgg);
        small.classes = 3;
        let b = Model::<f32>::new(small, 0).unwrap();
        let data = crate::data::synth_dataset(&crate::data::SynthConfig {
            per_class: 1,
            ..Default::default()
        })
        .unwrap();
        let cfg = AttackConfig::default();
        assert!(matches!(
            transfer_eval(&[("a".into(), &a)], &data, &cfg, 0, 4),
            Err(EvalError::Roster(_))
        ));
        assert!(matches!(
            transfer_eval(&[("a".into(), &a), ("b".into(), &b)], &data, &cfg, 0, 4),
            Err(EvalError::Roster(_))
        ));
        assert!(matches!(
            transfer_eval(&[("a".into(), &a), ("a".into(), &a)], &data, &cfg, 0, 4),
            Err(EvalError::Roster(_))
        ));
    }
}
