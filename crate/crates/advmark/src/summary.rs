//! Consolidated experiment summary over a run directory.
//!
//! Tables mirror the workflow stages: clean accuracy per model, clean versus
//! adversarial accuracy, adversarial-training loss curves, accuracy after the
//! defense, and the transfer matrix. Values are copied from the underlying
//! CSV artifacts without recomputation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::TRAIN_LOG_CSV;
use crate::cli::{EVAL_CSV, TRANSFER_CSV};
use crate::error::{Error, Result};
use crate::json::write_file;
use crate::manifest::{ModelRecord, RunManifest, MANIFEST_FILE};
use crate::report::{read_eval_csv, read_transfer_csv, EvalRow, TrainLogRow, TransferRow, TRAIN_LOG_CSV_HEADER};

pub const REPORT_DIR: &str = "report";
pub const SUMMARY_MD: &str = "summary.md";
pub const CLEAN_TABLE: &str = "clean_accuracy.csv";
pub const ATTACK_TABLE: &str = "clean_vs_adversarial.csv";
pub const DEFENSE_TABLE: &str = "post_defense.csv";
pub const TRANSFER_TABLE: &str = "transfer.csv";

/// Loss curve file of an adversarial training run.
pub fn loss_curve_file(id: &str) -> String {
    format!("{LOSS_CURVE_PREFIX}{id}.csv")
}

const LOSS_CURVE_PREFIX: &str = "adv_training_loss_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanRow {
    pub model: String,
    pub arch: String,
    pub epochs: usize,
    pub best_val_acc: f64,
    pub clean_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub model: String,
    pub arch: String,
    pub clean_acc: f64,
    pub adv_acc: Option<f64>,
    pub eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub arch: String,
    pub clean_model: Option<String>,
    pub clean_model_clean_acc: Option<f64>,
    pub clean_model_adv_acc: Option<f64>,
    pub defended_model: String,
    pub defended_clean_acc: f64,
    pub defended_adv_acc: Option<f64>,
}

struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn model(&self) -> Option<&ModelRecord> {
        self.manifest.models.first()
    }
}

fn scan(run_dir: &Path, skip: &Path) -> Result<Vec<Run>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join(MANIFEST_FILE).is_file() && p != skip)
        .collect();
    dirs.sort();
    let mut runs = Vec::new();
    let mut missing = Vec::new();
    for dir in dirs {
        let manifest = RunManifest::read(&dir)?;
        if manifest.command == "report" {
            continue;
        }
        missing.extend(manifest.missing_outputs(&dir));
        runs.push(Run { dir, manifest });
    }
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    if runs.is_empty() {
        return Err(Error::MissingArtifacts(vec![run_dir.join("*").join(MANIFEST_FILE).display().to_string()]));
    }
    Ok(runs)
}

fn single_eval(dir: &Path) -> Result<EvalRow> {
    let mut rows = read_eval_csv(&dir.join(EVAL_CSV))?;
    if rows.len() != 1 {
        return Err(Error::Report(format!("{} holds {} rows", dir.join(EVAL_CSV).display(), rows.len())));
    }
    Ok(rows.remove(0))
}

fn read_log(dir: &Path) -> Result<Vec<TrainLogRow>> {
    let path = dir.join(TRAIN_LOG_CSV);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    if text.lines().next() != Some(TRAIN_LOG_CSV_HEADER) {
        return Err(Error::Report(format!("{}: unexpected header", path.display())));
    }
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(|e| Error::Report(format!("{}: {e}", path.display()))))
        .collect()
}

fn csv_table<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Report(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Report(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "–".into())
}

fn md_table(out: &mut String, header: &[&str], rows: Vec<Vec<String>>) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

const ABSENT: &str = "_absent: no matching artifacts in the run directory_\n\n";

/// Reads every command manifest under `run_dir` and writes the summary
/// tables and `summary.md` into `out`.
pub fn write_summary(run_dir: &Path, out: &Path) -> Result<()> {
    let runs = scan(run_dir, out)?;
    let is = |r: &&Run, cmd: &str, adv: Option<bool>| {
        r.manifest.command == cmd && adv.is_none_or(|a| r.model().and_then(|m| m.adversarial) == Some(a))
    };

    let mut clean = Vec::new();
    let mut curves = Vec::new();
    for r in runs.iter().filter(|r| r.manifest.command == "train") {
        let Some(m) = r.model() else { continue };
        if m.adversarial == Some(true) {
            curves.push((m.id.clone(), read_log(&r.dir)?));
        } else {
            let log = read_log(&r.dir)?;
            let e = single_eval(&r.dir)?;
            clean.push(CleanRow {
                model: m.id.clone(),
                arch: m.arch.clone(),
                epochs: log.len(),
                best_val_acc: log.iter().map(|l| l.val_acc).fold(f64::NEG_INFINITY, f64::max),
                clean_acc: e.clean_acc,
            });
        }
    }

    let attack_row = |r: &Run| -> Result<AttackRow> {
        let e = single_eval(&r.dir)?;
        let m = r.model().expect("attack manifests carry one model");
        Ok(AttackRow {
            model: m.id.clone(),
            arch: m.arch.clone(),
            clean_acc: e.clean_acc,
            adv_acc: e.adv_acc,
            eps: e.eps,
        })
    };
    let attacked_clean: Vec<AttackRow> = runs
        .iter()
        .filter(|r| is(r, "attack", Some(false)))
        .map(attack_row)
        .collect::<Result<_>>()?;
    let attacked_defended: Vec<AttackRow> = runs
        .iter()
        .filter(|r| is(r, "attack", Some(true)))
        .map(attack_row)
        .collect::<Result<_>>()?;
    let suffix = |id: &str| id.rsplit('-').next().unwrap_or_default().to_string();
    let defense: Vec<DefenseRow> = attacked_defended
        .iter()
        .map(|d| {
            let same_arch = attacked_clean.iter().filter(|c| c.arch == d.arch);
            let pair = same_arch
                .clone()
                .find(|c| suffix(&c.model) == suffix(&d.model))
                .or_else(|| same_arch.clone().next());
            DefenseRow {
                arch: d.arch.clone(),
                clean_model: pair.map(|c| c.model.clone()),
                clean_model_clean_acc: pair.map(|c| c.clean_acc),
                clean_model_adv_acc: pair.and_then(|c| c.adv_acc),
                defended_model: d.model.clone(),
                defended_clean_acc: d.clean_acc,
                defended_adv_acc: d.adv_acc,
            }
        })
        .collect();
    let transfer: Option<Vec<TransferRow>> = runs
        .iter()
        .find(|r| r.manifest.command == "transfer")
        .map(|r| read_transfer_csv(&r.dir.join(TRANSFER_CSV)))
        .transpose()?;

    // Loss curves carry wall-clock seconds.
    let mut written: Vec<PathBuf> = Vec::new();
    let mut volatile: Vec<PathBuf> = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<()> {
        write_file(&out.join(&name), &bytes)?;
        if name.starts_with(LOSS_CURVE_PREFIX) {
            volatile.push(PathBuf::from(name));
        } else {
            written.push(PathBuf::from(name));
        }
        Ok(())
    };
    let mut md = String::from("# Experiment summary\n\n");

    md.push_str("## Clean accuracy per model\n\n");
    if clean.is_empty() {
        md.push_str(ABSENT);
    } else {
        emit(CLEAN_TABLE.into(), csv_table(&clean)?)?;
        md_table(
            &mut md,
            &["model", "arch", "epochs", "best val acc", "test clean acc"],
            clean
                .iter()
                .map(|c| vec![c.model.clone(), c.arch.clone(), c.epochs.to_string(), c.best_val_acc.to_string(), c.clean_acc.to_string()])
                .collect(),
        );
    }

    md.push_str("## Clean versus adversarial accuracy\n\n");
    if attacked_clean.is_empty() {
        md.push_str(ABSENT);
    } else {
        emit(ATTACK_TABLE.into(), csv_table(&attacked_clean)?)?;
        md_table(
            &mut md,
            &["model", "arch", "clean acc", "adversarial acc", "eps"],
            attacked_clean
                .iter()
                .map(|a| vec![a.model.clone(), a.arch.clone(), a.clean_acc.to_string(), opt(a.adv_acc), opt(a.eps)])
                .collect(),
        );
    }

    md.push_str("## Adversarial-training loss\n\n");
    if curves.is_empty() {
        md.push_str(ABSENT);
    } else {
        for (id, rows) in &curves {
            emit(loss_curve_file(id), csv_table(rows)?)?;
            let _ = writeln!(md, "### {id}\n");
            md_table(
                &mut md,
                &["epoch", "loss", "val acc", "adversarial val acc"],
                rows.iter()
                    .map(|r| vec![r.epoch.to_string(), r.loss.to_string(), r.val_acc.to_string(), opt(r.adv_val_acc)])
                    .collect(),
            );
        }
    }

    md.push_str("## Accuracy after adversarial training\n\n");
    if defense.is_empty() {
        md.push_str(ABSENT);
    } else {
        emit(DEFENSE_TABLE.into(), csv_table(&defense)?)?;
        md_table(
            &mut md,
            &["arch", "clean model", "its adversarial acc", "defended model", "defended clean acc", "defended adversarial acc"],
            defense
                .iter()
                .map(|d| {
                    vec![
                        d.arch.clone(),
                        d.clean_model.clone().unwrap_or_else(|| "–".into()),
                        opt(d.clean_model_adv_acc),
                        d.defended_model.clone(),
                        d.defended_clean_acc.to_string(),
                        opt(d.defended_adv_acc),
                    ]
                })
                .collect(),
        );
    }

    md.push_str("## Transfer matrix\n\n");
    match &transfer {
        None => md.push_str(ABSENT),
        Some(rows) => {
            emit(TRANSFER_TABLE.into(), csv_table(rows)?)?;
            md_table(
                &mut md,
                &["source", "target", "adversarial acc"],
                rows.iter()
                    .map(|r| vec![r.source.clone(), r.target.clone(), r.adv_acc.to_string()])
                    .collect(),
            );
        }
    }
    emit(SUMMARY_MD.into(), md.into_bytes())?;

    let mut manifest = RunManifest::without_config("report");
    for r in &runs {
        let name = r
            .dir
            .file_name()
            .map(|n| format!("{}/{MANIFEST_FILE}", n.to_string_lossy()))
            .unwrap_or_default();
        manifest.add_named_input(name, &r.dir.join(MANIFEST_FILE))?;
    }
    manifest.add_outputs(out, &written)?;
    manifest.add_volatile_outputs(&volatile);
    manifest.write(out)
}
