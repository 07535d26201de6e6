//! `dklab` subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use super::checkpoint::Checkpoint;
use super::config::{parse_config, DataSource, ExperimentConfig};
use super::idx;
use super::output::{metrics_rows, prepare_run_dir, write_csv, Cell, RunManifest, METRICS_HEADER};
use crate::harness::{
    class_token_entropy, evaluate, finetune_align, mc_inference, occlusion_eval, score, synthetic_shapes, train, Dataset,
};
use crate::masks::{block_seed_ratio, cross_seed_ratio, sample_block_mask, sample_cross_mask, DropVariant, Schedule, Structure};
use crate::rng::StreamRng;
use crate::theory::{exact_smoothing_coeffs, run_toy_dynamics, DynamicsVariant, ToyConfig};
use crate::vit::TinyViTParams;
use crate::{Error, Result};

pub const COMMANDS: [&str; 9] = [
    "train",
    "eval",
    "occlusion",
    "entropy",
    "mc-infer",
    "finetune",
    "theory-coeffs",
    "theory-dynamics",
    "masks-stats",
];

#[derive(Parser, Debug)]
#[command(name = "dklab", version, about = "Key-dropout attention experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and save the best-validation checkpoint.
    Train(Flags),
    /// Validation accuracy of a checkpoint.
    Eval(Flags),
    /// Accuracy with a fraction of patch tokens removed.
    Occlusion(Flags),
    /// Class-token attention entropy per layer.
    Entropy(Flags),
    /// Inference with averaged Monte Carlo attention.
    McInfer(Flags),
    /// Continue training a checkpoint with the drop disabled.
    Finetune(Flags),
    /// Exact smoothing coefficients of a probability vector.
    TheoryCoeffs(Flags),
    /// Gradient descent on the toy weighted-sum objective.
    TheoryDynamics(Flags),
    /// Realized drop fractions of structured masks.
    MasksStats(Flags),
}

#[derive(Args, Debug, Clone, Default)]
struct Flags {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Exact run directory; defaults to run-<timestamp>-<seed> under $DKLAB_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    variant: Option<DropVariant>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    schedule: Option<Schedule>,
    #[arg(long)]
    structure: Option<Structure>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long = "mc-k")]
    mc_k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    force: bool,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Probability vector for theory-coeffs.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Drop ratio for theory-coeffs.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Square patch grid side for masks-stats.
    #[arg(long)]
    grid: Option<usize>,
}

impl Error {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownCommand(_) => 2,
            Error::Config(_) => 3,
            Error::Idx(_) | Error::EmptyDataset | Error::LabelOutOfRange { .. } => 4,
            Error::Checkpoint(_) => 5,
            Error::Numerics(_) | Error::Theory(_) | Error::DivergedLoss { .. } | Error::AllKeysDropped { .. } => 6,
            Error::Mask(_) | Error::Invalid { .. } | Error::NotDivisible { .. } => 7,
            Error::OutputExists(_) => 8,
            Error::Io(_) => 9,
        }
    }
}

/// Runs `argv` (program name first) and returns the exit status, printing
/// a diagnostic on failure.
pub fn run_command<S: AsRef<str>>(argv: &[S]) -> i32 {
    match execute(argv) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(CliFailure::Usage(e)) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
        Err(CliFailure::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug)]
pub enum CliFailure {
    Usage(clap::Error),
    Run(Error),
}

impl From<Error> for CliFailure {
    fn from(e: Error) -> Self {
        CliFailure::Run(e)
    }
}

/// Parses and executes `argv`; returns the run directory.
pub fn execute<S: AsRef<str>>(argv: &[S]) -> std::result::Result<PathBuf, CliFailure> {
    let args: Vec<&str> = argv.iter().map(AsRef::as_ref).collect();
    if let Some(cmd) = args.get(1) {
        if !cmd.starts_with('-') && !COMMANDS.contains(cmd) && *cmd != "help" {
            return Err(Error::UnknownCommand(cmd.to_string()).into());
        }
    }
    let cli = Cli::try_parse_from(&args).map_err(CliFailure::Usage)?;
    Ok(dispatch(cli.command)?)
}

fn dispatch(command: Command) -> Result<PathBuf> {
    match command {
        Command::Train(f) => cmd_train(&f),
        Command::Eval(f) => cmd_eval(&f),
        Command::Occlusion(f) => cmd_occlusion(&f),
        Command::Entropy(f) => cmd_entropy(&f),
        Command::McInfer(f) => cmd_mc_infer(&f),
        Command::Finetune(f) => cmd_finetune(&f),
        Command::TheoryCoeffs(f) => cmd_theory_coeffs(&f),
        Command::TheoryDynamics(f) => cmd_theory_dynamics(&f),
        Command::MasksStats(f) => cmd_masks_stats(&f),
    }
}

/// Loads the config (or defaults) and applies flag overrides.
fn load_config(f: &Flags) -> Result<ExperimentConfig> {
    let mut cfg = match &f.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = f.seed {
        cfg.set_seed(seed);
    }
    let drop = &mut cfg.train.drop;
    if let Some(v) = f.variant {
        drop.variant = v;
    }
    if let Some(r) = f.ratio {
        drop.base_ratio = r;
    }
    if let Some(s) = f.schedule {
        drop.schedule = s;
    }
    if let Some(s) = f.structure {
        drop.structure = s;
    }
    if let Some(w) = f.window {
        drop.window = w;
    }
    if let Some(k) = f.mc_k {
        cfg.eval.mc_k = k;
    }
    if let Some(r) = &f.ratios {
        cfg.eval.ratios = r.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Training and validation sets described by the config.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    let full = match cfg.data.source {
        DataSource::Shapes => synthetic_shapes(&cfg.shapes())?,
        DataSource::Idx => read_idx(cfg, cfg.data.idx.images.as_deref(), cfg.data.idx.labels.as_deref())?,
    };
    if let (Some(images), Some(labels)) = (&cfg.data.idx.val_images, &cfg.data.idx.val_labels) {
        if cfg.data.source == DataSource::Idx {
            let val = read_idx(cfg, Some(images), Some(labels))?;
            return Ok((full, val));
        }
    }
    let n_train = ((1.0 - cfg.data.val_fraction) * full.len() as f64).round() as usize;
    Ok(full.split_at(n_train))
}

fn read_idx(cfg: &ExperimentConfig, images: Option<&Path>, labels: Option<&Path>) -> Result<Dataset> {
    let (Some(images), Some(labels)) = (images, labels) else {
        return Err(Error::invalid("data.idx", "images and labels are required"));
    };
    let image_bytes = std::fs::read(cfg.resolve_path(images))?;
    let label_bytes = std::fs::read(cfg.resolve_path(labels))?;
    let (imgs, labels) = idx::parse_pair(&image_bytes, &label_bytes)?;
    let mut data = Dataset::from_idx(&imgs, &labels)?;
    data.num_classes = data.num_classes.max(cfg.model.num_classes);
    Ok(data)
}

/// IDX image and label files as a dataset.
pub fn read_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (imgs, labels) = idx::parse_pair(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)?;
    Dataset::from_idx(&imgs, &labels)
}

fn checksum_of(train: &Dataset, val: &Dataset) -> String {
    format!("{}:{}", train.checksum(), val.checksum())
}

fn load_checkpoint(f: &Flags, cfg: &ExperimentConfig) -> Result<TinyViTParams> {
    let path = f.checkpoint.as_ref().ok_or_else(|| Error::invalid("checkpoint", "--checkpoint is required"))?;
    TinyViTParams::from_checkpoint(&cfg.model, &Checkpoint::read(path)?)
}

fn start_run(name: &str, f: &Flags, seed: u64, config: &impl Serialize, checksum: Option<String>) -> Result<PathBuf> {
    let dir = prepare_run_dir(f.out.as_deref(), seed, f.force)?;
    RunManifest::new(name, seed, config, checksum)?.write(&dir)?;
    Ok(dir)
}

/// Depends only on the command and seed so reruns write identical tables.
fn run_id(command: &str, seed: u64) -> String {
    format!("{command}-{seed}")
}

fn summary_rows(items: &[(&str, f64)]) -> Vec<Vec<Cell>> {
    items.iter().map(|(k, v)| vec![(*k).into(), (*v).into()]).collect()
}

fn cmd_train(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("train", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let out = train(&cfg.model, &cfg.train, &train_set, &val_set, &run_id("train", cfg.seed))?;
    out.params.to_checkpoint().write(&dir.join("checkpoint.dkcp"))?;
    write_csv(&dir.join("metrics.csv"), &METRICS_HEADER, &metrics_rows(&out.log.records))?;
    write_csv(
        &dir.join("summary.csv"),
        &["metric", "value"],
        &summary_rows(&[
            ("best_val_accuracy", out.best_val_accuracy),
            ("best_epoch", out.best_epoch as f64),
            ("final_val_accuracy", out.final_val_accuracy),
        ]),
    )?;
    Ok(dir)
}

fn cmd_eval(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let params = load_checkpoint(f, &cfg)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("eval", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let r = evaluate(&params, &cfg.model, &val_set)?;
    write_csv(&dir.join("metrics.csv"), &["metric", "value"], &summary_rows(&[("val_accuracy", r.accuracy), ("val_loss", r.loss)]))?;
    Ok(dir)
}

fn cmd_occlusion(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let params = load_checkpoint(f, &cfg)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("occlusion", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let rows = occlusion_eval(&params, &cfg.model, &val_set, &cfg.eval.ratios, cfg.eval.runs, &StreamRng::new(cfg.seed))?;
    let table: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let n = r.run_accuracies.len() as f64;
            let var = r.run_accuracies.iter().map(|a| (a - r.mean_accuracy).powi(2)).sum::<f64>() / n;
            vec![r.ratio.into(), r.removed.into(), r.mean_accuracy.into(), var.sqrt().into()]
        })
        .collect();
    write_csv(&dir.join("occlusion.csv"), &["ratio", "removed", "mean_accuracy", "std_accuracy"], &table)?;
    Ok(dir)
}

fn cmd_entropy(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let params = load_checkpoint(f, &cfg)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("entropy", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let per_layer = class_token_entropy(&params, &cfg.model, &val_set.images)?;
    let mut rows: Vec<Vec<Cell>> = per_layer.iter().enumerate().map(|(l, e)| vec![l.to_string().into(), (*e).into()]).collect();
    rows.push(vec!["mean".into(), (per_layer.iter().sum::<f64>() / per_layer.len() as f64).into()]);
    write_csv(&dir.join("entropy.csv"), &["layer", "entropy"], &rows)?;
    Ok(dir)
}

fn cmd_mc_infer(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let params = load_checkpoint(f, &cfg)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("mc-infer", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let plain = evaluate(&params, &cfg.model, &val_set)?;
    let out = mc_inference(&params, &cfg.model, &val_set.images, &cfg.train.drop, cfg.eval.mc_k, &StreamRng::new(cfg.seed))?;
    let mc = score(&out.logits, &val_set.labels);
    write_csv(
        &dir.join("mc.csv"),
        &["mode", "k", "accuracy", "loss"],
        &[
            vec!["deterministic".into(), 0usize.into(), plain.accuracy.into(), plain.loss.into()],
            vec!["monte_carlo".into(), cfg.eval.mc_k.into(), mc.accuracy.into(), mc.loss.into()],
        ],
    )?;
    Ok(dir)
}

fn cmd_finetune(f: &Flags) -> Result<PathBuf> {
    let cfg = load_config(f)?;
    let params = load_checkpoint(f, &cfg)?;
    let (train_set, val_set) = load_data(&cfg)?;
    let dir = start_run("finetune", f, cfg.seed, &cfg, Some(checksum_of(&train_set, &val_set)))?;
    let out = finetune_align(&params, &cfg.model, &cfg.train, &train_set, &val_set, &run_id("finetune", cfg.seed))?;
    out.params.to_checkpoint().write(&dir.join("checkpoint.dkcp"))?;
    write_csv(&dir.join("metrics.csv"), &METRICS_HEADER, &metrics_rows(&out.log.records))?;
    write_csv(
        &dir.join("summary.csv"),
        &["metric", "value"],
        &summary_rows(&[
            ("before_accuracy", out.before_accuracy),
            ("after_accuracy", out.after_accuracy),
            ("kept_original", if out.kept_original { 1.0 } else { 0.0 }),
        ]),
    )?;
    Ok(dir)
}

#[derive(Serialize)]
struct CoeffsRun<'a> {
    p: &'a [f64],
    d: f64,
}

fn cmd_theory_coeffs(f: &Flags) -> Result<PathBuf> {
    let p = f.p.as_deref().ok_or_else(|| Error::invalid("p", "--p is required"))?;
    let d = f.d.or(f.ratio).ok_or_else(|| Error::invalid("d", "--d is required"))?;
    let coeffs = exact_smoothing_coeffs(p, d)?;
    let dir = start_run("theory-coeffs", f, f.seed.unwrap_or(0), &CoeffsRun { p, d }, None)?;
    let rows: Vec<Vec<Cell>> = coeffs
        .c
        .iter()
        .zip(p)
        .enumerate()
        .map(|(j, (c, pj))| vec![j.into(), (*pj).into(), (*c).into()])
        .collect();
    write_csv(&dir.join("coeffs.csv"), &["j", "p", "c"], &rows)?;
    Ok(dir)
}

fn cmd_theory_dynamics(f: &Flags) -> Result<PathBuf> {
    let variant = match (f.variant.unwrap_or(DropVariant::None), f.ratio.unwrap_or(0.3)) {
        (DropVariant::None, _) => DynamicsVariant::Plain,
        (DropVariant::DropKey, d) => DynamicsVariant::DropKey(d),
        (other, _) => return Err(Error::invalid("variant", format!("toy dynamics support none and dropkey, not {other}"))),
    };
    let cfg = ToyConfig::new(8, 4, 1.0, f.steps.unwrap_or(2000), f.lr.unwrap_or(0.05), variant, f.seed.unwrap_or(0));
    let dir = start_run("theory-dynamics", f, cfg.seed, &format!("{cfg:?}"), None)?;
    let traj = run_toy_dynamics(&cfg)?;
    let rows: Vec<Vec<Cell>> = traj
        .records
        .iter()
        .map(|r| vec![r.step.into(), r.loss.into(), r.max_p.into(), r.entropy.into()])
        .collect();
    write_csv(&dir.join("trajectory.csv"), &["step", "loss", "max_p", "entropy"], &rows)?;
    Ok(dir)
}

#[derive(Serialize)]
struct MaskStatsRun {
    structure: String,
    ratio: f64,
    window: usize,
    grid: usize,
    samples: usize,
    seed: u64,
}

fn cmd_masks_stats(f: &Flags) -> Result<PathBuf> {
    let run = MaskStatsRun {
        structure: f.structure.unwrap_or(Structure::Block).to_string(),
        ratio: f.ratio.unwrap_or(0.3),
        window: f.window.unwrap_or(3),
        grid: f.grid.unwrap_or(32),
        samples: f.samples.unwrap_or(1000),
        seed: f.seed.unwrap_or(0),
    };
    let structure = f.structure.unwrap_or(Structure::Block);
    let (n, s, d) = (run.grid, run.window, run.ratio);
    let seed_ratio = match structure {
        Structure::Block => block_seed_ratio(d, s, n, n)?,
        Structure::Cross => cross_seed_ratio(d, s, n, n)?,
        Structure::Random => d,
    };
    let dir = start_run("masks-stats", f, run.seed, &run, None)?;
    let root = StreamRng::new(run.seed);
    let mut fractions = Vec::with_capacity(run.samples);
    for i in 0..run.samples {
        let mut rng = root.fork(i as u64);
        let dropped = match structure {
            Structure::Block => sample_block_mask(n, n, d, s, &mut rng)?,
            Structure::Cross => sample_cross_mask(n, n, d, s, &mut rng)?,
            Structure::Random => (0..n * n).map(|_| rng.bernoulli(d)).collect(),
        };
        fractions.push(dropped.iter().filter(|&&x| x).count() as f64 / (n * n) as f64);
    }
    let m = fractions.len().max(1) as f64;
    let mean = fractions.iter().sum::<f64>() / m;
    let std = (fractions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
    write_csv(
        &dir.join("masks.csv"),
        &["structure", "ratio", "window", "grid", "samples", "seed_ratio", "mean_fraction", "std_fraction"],
        &[vec![
            run.structure.as_str().into(),
            d.into(),
            s.into(),
            n.into(),
            run.samples.into(),
            seed_ratio.into(),
            mean.into(),
            std.into(),
        ]],
    )?;
    Ok(dir)
}
