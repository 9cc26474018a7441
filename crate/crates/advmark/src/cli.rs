//! Command-line front end: `synth`, `train`, `attack`, `transfer`, `report`.
//!
//! Progress goes to standard error; results go to files and standard output.
//! Every command writes its artifacts plus a `manifest.json` into its own
//! subdirectory of the output root.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use advmark_core::eval::{evaluate, evaluate_detailed, transfer_eval};
use advmark_core::model::{Classifier, Model};
use advmark_core::train::{fit, EpochRecord, TrainHooks, TrainState};
use clap::{Args, Parser, Subcommand};

use crate::checkpoint::{
    load_checkpoint, load_train_state, save_train_state, BEST_CHECKPOINT, FINAL_CHECKPOINT, TRAIN_LOG_CSV,
    TRAIN_LOG_JSON,
};
use crate::config::LoadedConfig;
use crate::dataset::export_dataset;
use crate::error::{Error, Result};
use crate::export::export_adversarial;
use crate::json::{to_json_bytes, write_file};
use crate::manifest::{ModelRecord, RunManifest, MANIFEST_FILE};
use crate::report::{
    eval_csv_bytes, transfer_csv_bytes, transfer_table, EvalDocument, EvalRow, Format, TransferDocument,
};
use crate::summary::write_summary;

pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const TRANSFER_CSV: &str = "transfer.csv";
pub const TRANSFER_JSON: &str = "transfer.json";
pub const DATASET_DIR: &str = "dataset";
pub const TRANSFER_DIR: &str = "transfer";

#[derive(Debug, Parser)]
#[command(name = "advmark", version, about = "Adversarial robustness laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master training/evaluation seed; overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Export the configured synthetic dataset as `dataset/<class>/*.png`.
    Synth(Common),
    /// Train one model; writes `train-<arch>-<clean|adv>/`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Mixed-batch adversarial training.
        #[arg(long)]
        adversarial: bool,
        /// Architecture with default hyperparameters, replacing `model`.
        #[arg(long, value_parser = ["vit", "resnet", "vgg"])]
        arch: Option<String>,
        /// Continue from the run directory's final checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// White-box PGD on the test split; writes `attack-<model>/`.
    Attack {
        #[command(flatten)]
        common: Common,
        /// Checkpoint manifest (`.json`).
        #[arg(long)]
        model: PathBuf,
        /// Print the report in this format instead of a summary line.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Transfer matrix over two or more checkpoints; writes `transfer/`.
    Transfer {
        #[command(flatten)]
        common: Common,
        /// Checkpoint manifest; repeat for every roster entry.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        /// Print the matrix in this format instead of a table.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Summarize every command run under a directory; writes `report/`.
    Report {
        run_dir: PathBuf,
        /// Report directory; defaults to `<run_dir>/report`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs a parsed command; the caller maps errors to exit codes.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => cmd_synth(&c),
        Command::Train {
            common,
            adversarial,
            arch,
            resume,
        } => cmd_train(&common, adversarial, arch.as_deref(), resume),
        Command::Attack { common, model, format } => cmd_attack(&common, &model, format),
        Command::Transfer { common, models, format } => cmd_transfer(&common, &models, format),
        Command::Report { run_dir, out } => {
            let out = out.unwrap_or_else(|| run_dir.join(crate::summary::REPORT_DIR));
            write_summary(&run_dir, &out)
        }
    }
}

fn load(common: &Common) -> Result<(LoadedConfig, PathBuf)> {
    let mut loaded = LoadedConfig::read(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.train.seed = seed;
    }
    let out = match &common.out {
        Some(o) => o.clone(),
        None => loaded.output_dir(),
    };
    Ok((loaded, out))
}

fn progress(msg: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}

fn cmd_synth(common: &Common) -> Result<()> {
    let (loaded, out) = load(common)?;
    if loaded.config.synth_config().is_none() {
        return Err(Error::Config("synth needs dataset.source.kind = \"synthetic\"".into()));
    }
    let data = loaded.load_dataset()?;
    let dir = out.join(DATASET_DIR);
    let written = export_dataset(&data, &dir)?;
    let mut manifest = RunManifest::new("synth", &loaded.config);
    manifest.add_outputs(&dir, &written)?;
    manifest.write(&dir)?;
    progress(format_args!("wrote {} images to {}", written.len(), dir.display()));
    Ok(())
}

struct StderrHooks {
    start: Instant,
    label: String,
}

impl TrainHooks for StderrHooks {
    fn now(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn on_epoch(&mut self, r: &EpochRecord) {
        let adv = r
            .adv_val_acc
            .map(|a| format!(" adv_val_acc={a:.4}"))
            .unwrap_or_default();
        progress(format_args!(
            "[{}] epoch {} loss={:.4} acc={:.4} val_loss={:.4} val_acc={:.4}{adv} ({:.1}s)",
            self.label, r.epoch, r.loss, r.acc, r.val_loss, r.val_acc, r.seconds
        ));
    }
}

/// `<arch>-<clean|adv>`.
pub fn run_id(arch: &str, adversarial: bool) -> String {
    format!("{arch}-{}", if adversarial { "adv" } else { "clean" })
}

/// Directory name of a training run.
pub fn train_dir_name(id: &str) -> String {
    format!("train-{id}")
}

fn cmd_train(common: &Common, adversarial: bool, arch: Option<&str>, resume: bool) -> Result<()> {
    let (mut loaded, out) = load(common)?;
    let cfg = &mut loaded.config;
    cfg.train.adversarial |= adversarial;
    if let Some(tag) = arch {
        let a = advmark_core::model::Architecture::from_tag(tag).expect("clap restricts values");
        cfg.model = advmark_core::model::ArchConfig::default_for(a);
    }
    cfg.validate()?;
    let cfg = loaded.config.clone();
    let splits = loaded.load_splits()?;
    let spec = cfg.classifier_spec(&splits.train)?;
    let arch_tag = spec.architecture().tag();
    let id = run_id(arch_tag, cfg.train.adversarial);
    let dir = out.join(train_dir_name(&id));

    let state = if resume && dir.join(FINAL_CHECKPOINT).is_file() {
        let (state, seed) = load_train_state(&dir)?;
        if state.model.spec() != &spec || seed != cfg.train.seed {
            return Err(Error::Config(format!(
                "{} was produced by a different model spec or seed",
                dir.display()
            )));
        }
        progress(format_args!("[{id}] resuming after epoch {}", state.epoch()));
        state
    } else {
        TrainState::new(Model::new(spec, cfg.train.streams().init())?)
    };
    let mut hooks = StderrHooks {
        start: Instant::now(),
        label: id.clone(),
    };
    let outcome = fit(state, &splits.train, &splits.val, &cfg.train, &mut hooks)?;
    save_train_state(&dir, &outcome.state, cfg.train.seed, cfg.train.adversarial)?;

    let best = outcome.best_model();
    let report = evaluate(&best, &id, &splits.test, None, &cfg.eval_options())?;
    write_file(&dir.join(EVAL_CSV), &eval_csv_bytes(&[EvalRow::from_report(&report)])?)?;
    let doc = EvalDocument::from_report(&report, splits.test.class_names());
    write_file(&dir.join(EVAL_JSON), &to_json_bytes(&doc))?;

    let mut manifest = RunManifest::new("train", &cfg);
    manifest.models.push(ModelRecord {
        id: id.clone(),
        arch: arch_tag.into(),
        adversarial: Some(cfg.train.adversarial),
    });
    let mut outputs: Vec<PathBuf> = [FINAL_CHECKPOINT, "final.bin"].map(PathBuf::from).to_vec();
    if outcome.state.best.is_some() {
        outputs.extend([BEST_CHECKPOINT, "best.bin"].map(PathBuf::from));
    }
    outputs.extend([EVAL_CSV, EVAL_JSON].map(PathBuf::from));
    manifest.add_outputs(&dir, &outputs)?;
    manifest.add_volatile_outputs(&[TRAIN_LOG_CSV, TRAIN_LOG_JSON].map(PathBuf::from));
    manifest.write(&dir)?;
    progress(format_args!(
        "[{id}] best epoch {:?}, test clean_acc={:.4}; wrote {}",
        outcome.best_epoch,
        report.clean_accuracy,
        dir.display()
    ));
    Ok(())
}

/// Roster id of a checkpoint: `<run>-<stem>` for files inside a training
/// run directory, else the file stem.
pub fn model_id(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let run = path
        .parent()
        .and_then(Path::file_name)
        .and_then(|n| n.to_str())
        .and_then(|n| n.strip_prefix("train-"));
    match run {
        Some(run) => format!("{run}-{stem}"),
        None => stem,
    }
}

fn check_spec(model: &Model<f32>, path: &Path, loaded: &LoadedConfig, data: &advmark_core::data::DatasetSplit) -> Result<()> {
    let dims = data.image_dims().ok_or(advmark_core::error::DataError::Empty)?;
    if model.input_dims() != dims
        || model.num_classes() != data.num_classes()
        || model.spec().resolution != loaded.config.dataset.resolution
    {
        return Err(Error::Config(format!(
            "checkpoint {} expects {:?} inputs with {} classes; dataset has {:?} with {}",
            path.display(),
            model.input_dims(),
            model.num_classes(),
            dims,
            data.num_classes()
        )));
    }
    Ok(())
}

fn model_record(id: &str, ck: &crate::checkpoint::Checkpoint) -> ModelRecord {
    ModelRecord {
        id: id.into(),
        arch: ck.model.spec().architecture().tag().into(),
        adversarial: ck.adversarial,
    }
}

fn add_checkpoint_inputs(manifest: &mut RunManifest, path: &Path) -> Result<()> {
    manifest.add_input(path)?;
    manifest.add_input(&crate::checkpoint::blob_path(path))
}

fn cmd_attack(common: &Common, model_path: &Path, format: Option<Format>) -> Result<()> {
    let (loaded, out) = load(common)?;
    let cfg = &loaded.config;
    let ck = load_checkpoint(model_path)?;
    let splits = loaded.load_splits()?;
    check_spec(&ck.model, model_path, &loaded, &splits.test)?;
    let id = model_id(model_path);
    let dir = out.join(format!("attack-{id}"));
    progress(format_args!("[{id}] attacking {} test images", splits.test.len()));
    let (report, results) = evaluate_detailed(&ck.model, &id, &splits.test, Some(&cfg.attack), &cfg.eval_options())?;
    let (sidecar, mut written) = export_adversarial(&dir, &id, &splits.test, &results, &cfg.attack)?;

    let row = EvalRow::from_report(&report);
    let csv = eval_csv_bytes(std::slice::from_ref(&row))?;
    let doc = EvalDocument::from_report(&report, splits.test.class_names());
    let json = to_json_bytes(&doc);
    write_file(&dir.join(EVAL_CSV), &csv)?;
    write_file(&dir.join(EVAL_JSON), &json)?;
    written.extend([EVAL_CSV, EVAL_JSON].map(PathBuf::from));

    let mut manifest = RunManifest::new("attack", cfg);
    manifest.models.push(model_record(&id, &ck));
    add_checkpoint_inputs(&mut manifest, model_path)?;
    manifest.add_outputs(&dir, &written)?;
    manifest.write(&dir)?;

    let mut stdout = std::io::stdout();
    let _ = match format {
        Some(Format::Csv) => stdout.write_all(&csv),
        Some(Format::Json) => stdout.write_all(&json),
        None => writeln!(
            stdout,
            "model={id} clean_acc={} adv_acc={} mean_linf={} max_linf={} eps={} success_rate={}",
            row.clean_acc,
            row.adv_acc.unwrap_or(f64::NAN),
            sidecar.summary.mean_linf,
            sidecar.summary.max_linf,
            sidecar.eps,
            sidecar.summary.success_rate
        ),
    };
    Ok(())
}

fn cmd_transfer(common: &Common, paths: &[PathBuf], format: Option<Format>) -> Result<()> {
    let (loaded, out) = load(common)?;
    let cfg = &loaded.config;
    let splits = loaded.load_splits()?;
    let mut checkpoints = Vec::with_capacity(paths.len());
    let mut ids: Vec<String> = Vec::with_capacity(paths.len());
    for p in paths {
        let ck = load_checkpoint(p)?;
        check_spec(&ck.model, p, &loaded, &splits.test)?;
        let base = model_id(p);
        let mut id = base.clone();
        let mut k = 2;
        while ids.contains(&id) {
            id = format!("{base}-{k}");
            k += 1;
        }
        ids.push(id);
        checkpoints.push(ck);
    }
    let roster: Vec<(String, &Model<f32>)> = ids.iter().cloned().zip(checkpoints.iter().map(|c| &c.model)).collect();
    progress(format_args!("transfer over {} models on {} test images", roster.len(), splits.test.len()));
    let opts = cfg.eval_options();
    let matrix = transfer_eval(&roster, &splits.test, &cfg.attack, opts.seed, opts.batch_size)?;

    let dir = out.join(TRANSFER_DIR);
    let csv = transfer_csv_bytes(&matrix)?;
    let json = to_json_bytes(&TransferDocument::from_matrix(&matrix));
    write_file(&dir.join(TRANSFER_CSV), &csv)?;
    write_file(&dir.join(TRANSFER_JSON), &json)?;
    let mut manifest = RunManifest::new("transfer", cfg);
    for (id, ck) in ids.iter().zip(&checkpoints) {
        manifest.models.push(model_record(id, ck));
    }
    for p in paths {
        add_checkpoint_inputs(&mut manifest, p)?;
    }
    manifest.add_outputs(&dir, &[TRANSFER_CSV, TRANSFER_JSON].map(PathBuf::from))?;
    manifest.write(&dir)?;

    let mut stdout = std::io::stdout();
    let _ = match format {
        Some(Format::Csv) => stdout.write_all(&csv),
        Some(Format::Json) => stdout.write_all(&json),
        None => stdout.write_all(transfer_table(&matrix).as_bytes()),
    };
    Ok(())
}

/// Manifest path of a command output directory.
pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}
