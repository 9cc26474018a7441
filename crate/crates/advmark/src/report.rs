//! CSV and JSON emission of evaluation reports, transfer matrices and
//! training logs.
//!
//! Every float is rounded to 6 significant digits before it is written, so a
//! re-parsed file equals the rounded in-memory value exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use advmark_core::attack::AttackConfig;
use advmark_core::eval::{EvalReport, TransferMatrix};
use advmark_core::train::{EpochRecord, TrainLog};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{read_json, write_file, write_json};

/// `x` rounded to 6 significant digits. Non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

fn round_opt(x: Option<f64>) -> Option<f64> {
    x.map(round_sig)
}

/// Output format for machine-readable results.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub const EVAL_CSV_HEADER: &str =
    "model,dataset,samples,clean_acc,adv_acc,eps,alpha,steps,random_start,targeted,blur_sigma,mean_linf,mean_l2";
pub const TRANSFER_CSV_HEADER: &str = "source,target,adv_acc";
pub const TRAIN_LOG_CSV_HEADER: &str = "epoch,loss,acc,val_loss,val_acc,adv_val_acc,seconds";

/// Source label of the random-noise baseline rows of a transfer CSV.
pub const NOISE_SOURCE: &str = "noise";

/// One evaluation report as a flat record; attack fields are empty for a
/// clean-only evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRow {
    pub model: String,
    pub dataset: String,
    pub samples: usize,
    pub clean_acc: f64,
    pub adv_acc: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub random_start: Option<bool>,
    pub targeted: Option<bool>,
    pub blur_sigma: Option<f64>,
    pub mean_linf: Option<f64>,
    pub mean_l2: Option<f64>,
}

impl EvalRow {
    pub fn from_report(r: &EvalReport) -> Self {
        Self {
            model: r.model.clone(),
            dataset: r.dataset.clone(),
            samples: r.samples,
            clean_acc: round_sig(r.clean_accuracy),
            adv_acc: round_opt(r.adversarial_accuracy),
            eps: r.attack.map(|a| round_sig(a.epsilon)),
            alpha: r.attack.map(|a| round_sig(a.alpha)),
            steps: r.attack.map(|a| a.steps),
            random_start: r.attack.map(|a| a.random_start),
            targeted: r.attack.map(|a| a.targeted),
            blur_sigma: round_opt(r.blur_sigma),
            mean_linf: round_opt(r.mean_linf),
            mean_l2: round_opt(r.mean_l2),
        }
    }
}

/// JSON form of an evaluation report: the CSV fields plus per-class
/// metrics and confusion matrices (rows are true classes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDocument {
    pub model: String,
    pub dataset: String,
    pub samples: usize,
    pub clean_acc: f64,
    pub adv_acc: Option<f64>,
    pub eps: Option<f64>,
    pub alpha: Option<f64>,
    pub steps: Option<usize>,
    pub random_start: Option<bool>,
    pub targeted: Option<bool>,
    pub blur_sigma: Option<f64>,
    pub mean_linf: Option<f64>,
    pub mean_l2: Option<f64>,
    pub class_names: Vec<String>,
    pub clean_precision: Vec<f64>,
    pub clean_recall: Vec<f64>,
    pub clean_confusion: Vec<Vec<u64>>,
    pub adv_precision: Option<Vec<f64>>,
    pub adv_recall: Option<Vec<f64>>,
    pub adv_confusion: Option<Vec<Vec<u64>>>,
}

fn matrix_rows(m: &advmark_core::eval::ConfusionMatrix) -> Vec<Vec<u64>> {
    m.counts.chunks(m.classes.max(1)).map(<[u64]>::to_vec).collect()
}

fn round_all(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(round_sig).collect()
}

impl EvalDocument {
    pub fn from_report(r: &EvalReport, class_names: &[String]) -> Self {
        let row = EvalRow::from_report(r);
        let adv = r.adversarial_confusion.as_ref();
        Self {
            model: row.model,
            dataset: row.dataset,
            samples: row.samples,
            clean_acc: row.clean_acc,
            adv_acc: row.adv_acc,
            eps: row.eps,
            alpha: row.alpha,
            steps: row.steps,
            random_start: row.random_start,
            targeted: row.targeted,
            blur_sigma: row.blur_sigma,
            mean_linf: row.mean_linf,
            mean_l2: row.mean_l2,
            class_names: class_names.to_vec(),
            clean_precision: round_all(r.clean_confusion.precision()),
            clean_recall: round_all(r.clean_confusion.recall()),
            clean_confusion: matrix_rows(&r.clean_confusion),
            adv_precision: adv.map(|m| round_all(m.precision())),
            adv_recall: adv.map(|m| round_all(m.recall())),
            adv_confusion: adv.map(matrix_rows),
        }
    }

    pub fn row(&self) -> EvalRow {
        EvalRow {
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            samples: self.samples,
            clean_acc: self.clean_acc,
            adv_acc: self.adv_acc,
            eps: self.eps,
            alpha: self.alpha,
            steps: self.steps,
            random_start: self.random_start,
            targeted: self.targeted,
            blur_sigma: self.blur_sigma,
            mean_linf: self.mean_linf,
            mean_l2: self.mean_l2,
        }
    }
}

fn csv_bytes<T: Serialize>(header: &str, rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    let body = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    let mut out = Vec::with_capacity(header.len() + 1 + body.len());
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&body);
    Ok(out)
}

fn read_csv<T: DeserializeOwned>(path: &Path, header: &str) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let first = text.lines().next().unwrap_or_default();
    if first != header {
        return Err(Error::Report(format!(
            "{}: header `{first}` does not match `{header}`",
            path.display()
        )));
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::Report(format!("{} row {}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn eval_csv_bytes(rows: &[EvalRow]) -> Result<Vec<u8>> {
    csv_bytes(EVAL_CSV_HEADER, rows)
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    write_file(path, &eval_csv_bytes(rows)?)
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRow>> {
    read_csv(path, EVAL_CSV_HEADER)
}

pub fn write_eval_json(path: &Path, doc: &EvalDocument) -> Result<()> {
    write_json(path, doc)
}

pub fn read_eval_json(path: &Path) -> Result<EvalDocument> {
    read_json(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRow {
    pub source: String,
    pub target: String,
    pub adv_acc: f64,
}

/// JSON form of a transfer matrix: the CSV rows plus clean accuracies and
/// the attack budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferDocument {
    pub models: Vec<String>,
    pub rows: Vec<TransferRow>,
    pub clean_acc: Vec<f64>,
    pub eps: f64,
    pub alpha: f64,
    pub steps: usize,
    pub random_start: bool,
    pub targeted: bool,
}

/// Source-major cells, then one `noise` row per target.
pub fn transfer_rows(t: &TransferMatrix) -> Vec<TransferRow> {
    let mut rows = Vec::with_capacity(t.models.len() * (t.models.len() + 1));
    for (s, source) in t.models.iter().enumerate() {
        for (tg, target) in t.models.iter().enumerate() {
            rows.push(TransferRow {
                source: source.clone(),
                target: target.clone(),
                adv_acc: round_sig(t.cell(s, tg)),
            });
        }
    }
    for (target, &acc) in t.models.iter().zip(&t.noise) {
        rows.push(TransferRow {
            source: NOISE_SOURCE.into(),
            target: target.clone(),
            adv_acc: round_sig(acc),
        });
    }
    rows
}

impl TransferDocument {
    pub fn from_matrix(t: &TransferMatrix) -> Self {
        Self {
            models: t.models.clone(),
            rows: transfer_rows(t),
            clean_acc: round_all(t.clean.clone()),
            eps: round_sig(t.attack.epsilon),
            alpha: round_sig(t.attack.alpha),
            steps: t.attack.steps,
            random_start: t.attack.random_start,
            targeted: t.attack.targeted,
        }
    }

    /// Rebuilds the (rounded) matrix.
    pub fn to_matrix(&self) -> Result<TransferMatrix> {
        let (cells, noise) = matrix_from_rows(&self.models, &self.rows)?;
        Ok(TransferMatrix {
            models: self.models.clone(),
            cells,
            noise,
            clean: self.clean_acc.clone(),
            attack: AttackConfig {
                epsilon: self.eps,
                alpha: self.alpha,
                steps: self.steps,
                random_start: self.random_start,
                targeted: self.targeted,
            },
        })
    }
}

/// Grid and noise column from CSV rows; every cell must appear exactly once.
pub fn matrix_from_rows(models: &[String], rows: &[TransferRow]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = models.len();
    let index = |id: &str| models.iter().position(|m| m == id);
    let mut cells = vec![vec![None; n]; n];
    let mut noise = vec![None; n];
    for r in rows {
        let t = index(&r.target).ok_or_else(|| Error::Report(format!("unknown target `{}`", r.target)))?;
        let slot = if r.source == NOISE_SOURCE {
            &mut noise[t]
        } else {
            let s = index(&r.source).ok_or_else(|| Error::Report(format!("unknown source `{}`", r.source)))?;
            &mut cells[s][t]
        };
        if slot.replace(r.adv_acc).is_some() {
            return Err(Error::Report(format!("duplicate cell {} → {}", r.source, r.target)));
        }
    }
    let missing = || Error::Report("transfer rows do not cover the grid".into());
    let cells = cells
        .into_iter()
        .map(|row| row.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing))
        .collect::<Result<Vec<_>>>()?;
    let noise = noise.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing)?;
    Ok((cells, noise))
}

pub fn transfer_csv_bytes(t: &TransferMatrix) -> Result<Vec<u8>> {
    csv_bytes(TRANSFER_CSV_HEADER, &transfer_rows(t))
}

pub fn read_transfer_csv(path: &Path) -> Result<Vec<TransferRow>> {
    read_csv(path, TRANSFER_CSV_HEADER)
}

/// Fixed-width table: one row per source plus the noise row, one column per
/// target, accuracies in percent.
pub fn transfer_table(t: &TransferMatrix) -> String {
    let width = t.models.iter().map(String::len).max().unwrap_or(0).max(NOISE_SOURCE.len()).max(13);
    let mut out = String::new();
    let _ = write!(out, "{:width$}", "source\\target");
    for m in &t.models {
        let _ = write!(out, "  {m:>8}");
    }
    out.push('\n');
    let mut line = |label: &str, values: &[f64]| {
        let _ = write!(out, "{label:width$}");
        for v in values {
            let _ = write!(out, "  {:>7.1}%", 100.0 * v);
        }
        out.push('\n');
    };
    for (m, row) in t.models.iter().zip(&t.cells) {
        line(m, row);
    }
    line(NOISE_SOURCE, &t.noise);
    line("clean", &t.clean);
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub adv_val_acc: Option<f64>,
    pub seconds: f64,
}

impl From<&EpochRecord> for TrainLogRow {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            loss: round_sig(r.loss),
            acc: round_sig(r.acc),
            val_loss: round_sig(r.val_loss),
            val_acc: round_sig(r.val_acc),
            adv_val_acc: round_opt(r.adv_val_acc),
            seconds: round_sig(r.seconds),
        }
    }
}

impl From<&TrainLogRow> for EpochRecord {
    fn from(r: &TrainLogRow) -> Self {
        Self {
            epoch: r.epoch,
            loss: r.loss,
            acc: r.acc,
            val_loss: r.val_loss,
            val_acc: r.val_acc,
            adv_val_acc: r.adv_val_acc,
            seconds: r.seconds,
        }
    }
}

pub fn train_log_csv_bytes(log: &TrainLog) -> Result<Vec<u8>> {
    let rows: Vec<TrainLogRow> = log.epochs.iter().map(TrainLogRow::from).collect();
    csv_bytes(TRAIN_LOG_CSV_HEADER, &rows)
}

pub fn write_train_log_csv(path: &Path, log: &TrainLog) -> Result<()> {
    write_file(path, &train_log_csv_bytes(log)?)
}

pub fn read_train_log_csv(path: &Path) -> Result<TrainLog> {
    let rows: Vec<TrainLogRow> = read_csv(path, TRAIN_LOG_CSV_HEADER)?;
    Ok(TrainLog {
        epochs: rows.iter().map(EpochRecord::from).collect(),
    })
}

/// `log` with every value rounded as in its CSV form.
pub fn rounded_log(log: &TrainLog) -> TrainLog {
    TrainLog {
        epochs: log
            .epochs
            .iter()
            .map(|r| EpochRecord::from(&TrainLogRow::from(r)))
            .collect(),
    }
}
