//! Batch pipeline driver: synthesize scenes, train, predict, evaluate,
//! compare. All randomness flows from `--seed`; every command validates
//! its inputs before writing any output file.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use piqa_core::data::{self, SyntheticConfig};
use piqa_core::inference::{self, TtaMode, TtaSpec};
use piqa_core::metrics::{self, MetricReport};
use piqa_core::models::{Checkpoint, ModelKind};
use piqa_core::training::{
    self, BatchSpec, LossKind, OptimKind, OptimizerConfig, ScheduleSpec, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "piqa",
    about = "Scene-wise portrait quality assessment pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene-grouped dataset (manifest + features).
    Synth(SynthArgs),
    /// Train a model on a manifest and feature store.
    Train(TrainArgs),
    /// Score a manifest with a trained checkpoint.
    Predict(PredictArgs),
    /// Evaluate predictions against a manifest, scene by scene.
    Eval(EvalArgs),
    /// Rank evaluation reports by their final metric.
    Leaderboard(LeaderboardArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of scenes.
    #[arg(long, default_value_t = 8)]
    scenes: usize,
    /// Images per scene.
    #[arg(long = "per-scene", default_value_t = 40)]
    per_scene: usize,
    /// Feature vector length.
    #[arg(long = "feature-dim", default_value_t = 16)]
    feature_dim: usize,
    /// Feature noise standard deviation.
    #[arg(long = "noise-sd", default_value_t = 0.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for manifest.csv and features.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Hyper,
    Sem,
    Fhiqa,
    Monet,
    Gated,
}

impl From<ModelArg> for ModelKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Hyper => ModelKind::Hyper,
            ModelArg::Sem => ModelKind::Sem,
            ModelArg::Fhiqa => ModelKind::Fhiqa,
            ModelArg::Monet => ModelKind::Monet,
            ModelArg::Gated => ModelKind::Gated,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Ssi,
    Merged,
    Fidelity,
    Patch,
    Huber,
}

impl From<LossArg> for LossKind {
    fn from(value: LossArg) -> Self {
        match value {
            LossArg::Ssi => LossKind::Ssi,
            LossArg::Merged => LossKind::Merged,
            LossArg::Fidelity => LossKind::Fidelity,
            LossArg::Patch => LossKind::Patch,
            LossArg::Huber => LossKind::Huber,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ScheduleArg {
    Step,
    Cosine,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Adam,
    Adamw,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Hyper)]
    model: ModelArg,
    #[arg(long, value_enum, default_value_t = LossArg::Ssi)]
    loss: LossArg,
    /// Scenes per batch (S).
    #[arg(long = "batch-scenes", default_value_t = 4)]
    batch_scenes: usize,
    /// Samples per scene per batch (K).
    #[arg(long = "batch-per-scene", default_value_t = 32)]
    batch_per_scene: usize,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Step)]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Step schedule: initial learning rate.
    #[arg(long = "base-lr", default_value_t = 1e-2)]
    base_lr: f64,
    /// Step schedule: divide the rate by this factor...
    #[arg(long = "decay-factor", default_value_t = 10.0)]
    decay_factor: f64,
    /// ...after every this many epochs.
    #[arg(long = "decay-every", default_value_t = 5)]
    decay_every: usize,
    /// Cosine schedule: peak learning rate.
    #[arg(long = "max-lr", default_value_t = 1e-2)]
    max_lr: f64,
    /// Cosine schedule: floor learning rate.
    #[arg(long = "min-lr", default_value_t = 0.0)]
    min_lr: f64,
    /// Cosine schedule: warmup epochs (default: epochs / 10).
    #[arg(long = "warmup-epochs")]
    warmup_epochs: Option<usize>,
    /// Cosine schedule: cycle length (default: the epoch count).
    #[arg(long = "cycle-epochs")]
    cycle_epochs: Option<usize>,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    #[arg(long = "weight-decay", default_value_t = 5e-4)]
    weight_decay: f64,
    /// Patch loss: jittered views per image.
    #[arg(long = "patches-per-image", default_value_t = 4)]
    patches_per_image: usize,
    /// Patch loss: view jitter standard deviation.
    #[arg(long = "patch-jitter", default_value_t = 0.05)]
    patch_jitter: f64,
    /// Huber loss transition point.
    #[arg(long = "huber-delta", default_value_t = 0.2)]
    huber_delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for checkpoint.json and history.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Augmentation: none | five | ten | rand:K | corners | dense:N.
    #[arg(long, default_value = "none")]
    tta: String,
    /// Jitter standard deviation for feature-vector TTA views.
    #[arg(long = "tta-jitter", default_value_t = 0.0)]
    tta_jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output predictions CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions CSV (image_id,score).
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LeaderboardArgs {
    /// Report JSON files produced by `eval`; entries are named by file stem.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
}

enum CliError {
    /// Bad invocation or missing input file: exit 2.
    Usage(String),
    /// Failure while running: exit 1.
    Runtime(String),
}

impl CliError {
    fn runtime<E: std::fmt::Display>(err: E) -> Self {
        CliError::Runtime(err.to_string())
    }
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn parse_tta(text: &str, seed: u64, jitter_sd: f64) -> Result<TtaSpec, CliError> {
    let mode = match text {
        "none" => TtaMode::None,
        "five" => TtaMode::FiveCrop,
        "ten" => TtaMode::TenCrop,
        "corners" => TtaMode::CornersCenter,
        other => {
            if let Some(k) = other.strip_prefix("rand:") {
                let k = k.parse::<usize>().map_err(|_| {
                    CliError::Usage(format!("invalid rand crop count in --tta {other:?}"))
                })?;
                TtaMode::Rand { k }
            } else if let Some(n) = other.strip_prefix("dense:") {
                let n = n.parse::<usize>().map_err(|_| {
                    CliError::Usage(format!("invalid dense patch count in --tta {other:?}"))
                })?;
                TtaMode::Dense { n }
            } else {
                return Err(CliError::Usage(format!(
                    "unknown --tta mode {other:?} (expected none|five|ten|rand:K|corners|dense:N)"
                )));
            }
        }
    };
    let spec = TtaSpec {
        mode,
        seed,
        jitter_sd,
    };
    spec.validate().map_err(CliError::runtime)?;
    Ok(spec)
}

fn run_synth(args: &SynthArgs) -> Result<(), CliError> {
    let config = SyntheticConfig {
        n_scenes: args.scenes,
        images_per_scene: args.per_scene,
        feature_dim: args.feature_dim,
        noise_sd: args.noise_sd,
        seed: args.seed,
        ..SyntheticConfig::default()
    };
    let dataset = data::generate_synthetic(&config).map_err(CliError::runtime)?;
    ensure_dir(&args.out)?;
    let manifest_path = args.out.join("manifest.csv");
    let features_path = args.out.join("features.csv");
    data::save_manifest(&dataset.manifest, &manifest_path).map_err(CliError::runtime)?;
    dataset.features.save(&features_path).map_err(CliError::runtime)?;
    println!(
        "wrote {} ({} records, {} scenes) and {}",
        manifest_path.display(),
        dataset.manifest.len(),
        dataset.manifest.n_scenes(),
        features_path.display()
    );
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<(), CliError> {
    require_file(&args.manifest, "manifest")?;
    require_file(&args.features, "feature store")?;
    let manifest = data::load_manifest(&args.manifest).map_err(CliError::runtime)?;
    let features = data::FeatureStore::load(&args.features).map_err(CliError::runtime)?;

    let schedule = match args.schedule {
        ScheduleArg::Step => ScheduleSpec::Step {
            base_lr: args.base_lr,
            decay_factor: args.decay_factor,
            decay_every_epochs: args.decay_every,
        },
        ScheduleArg::Cosine => ScheduleSpec::Cosine {
            max_lr: args.max_lr,
            min_lr: args.min_lr,
            warmup_epochs: args.warmup_epochs.unwrap_or(args.epochs / 10),
            cycle_epochs: args.cycle_epochs.unwrap_or(args.epochs),
        },
    };
    let config = TrainConfig {
        model: args.model.into(),
        loss: args.loss.into(),
        batch: BatchSpec {
            scenes_per_batch: args.batch_scenes,
            samples_per_scene: args.batch_per_scene,
        },
        schedule,
        epochs: args.epochs,
        seed: args.seed,
        optimizer: OptimizerConfig {
            kind: match args.optimizer {
                OptimizerArg::Adam => OptimKind::Adam,
                OptimizerArg::Adamw => OptimKind::AdamW,
            },
            weight_decay: args.weight_decay,
            ..OptimizerConfig::default()
        },
        patches_per_image: args.patches_per_image,
        patch_jitter_sd: args.patch_jitter,
        huber_delta: args.huber_delta,
        ..TrainConfig::default()
    };
    config.validate().map_err(CliError::runtime)?;

    let outcome = training::train(&config, &manifest, &features).map_err(CliError::runtime)?;

    ensure_dir(&args.out)?;
    let checkpoint_path = args.out.join("checkpoint.json");
    let history_path = args.out.join("history.csv");
    Checkpoint::from_model(&outcome.model)
        .save(&checkpoint_path)
        .map_err(CliError::runtime)?;
    training::save_history(&outcome.history, &history_path).map_err(CliError::runtime)?;
    println!(
        "trained {} with {} loss for {} epochs; best epoch {} (loss {:.6}); wrote {} and {}",
        config.model.name(),
        config.loss.name(),
        config.epochs,
        outcome.best_epoch,
        outcome.best_loss,
        checkpoint_path.display(),
        history_path.display()
    );
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<(), CliError> {
    require_file(&args.manifest, "manifest")?;
    require_file(&args.features, "feature store")?;
    require_file(&args.checkpoint, "checkpoint")?;
    let spec = parse_tta(&args.tta, args.seed, args.tta_jitter)?;
    let manifest = data::load_manifest(&args.manifest).map_err(CliError::runtime)?;
    let features = data::FeatureStore::load(&args.features).map_err(CliError::runtime)?;
    let model = Checkpoint::load(&args.checkpoint)
        .and_then(Checkpoint::into_model)
        .map_err(CliError::runtime)?;

    let predictions =
        inference::predict(&model, &manifest, &features, &spec).map_err(CliError::runtime)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    inference::save_predictions(&predictions.scores, &args.out).map_err(CliError::runtime)?;
    println!(
        "scored {} images with {} ({}); wrote {}",
        predictions.scores.len(),
        predictions.model,
        args.tta,
        args.out.display()
    );
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    require_file(&args.pred, "predictions file")?;
    require_file(&args.manifest, "manifest")?;
    let predictions = inference::load_predictions(&args.pred).map_err(CliError::runtime)?;
    let manifest = data::load_manifest(&args.manifest).map_err(CliError::runtime)?;
    let report = metrics::evaluate(&predictions, &manifest).map_err(CliError::runtime)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    std::fs::write(&args.out, report.to_json())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", args.out.display())))?;
    let shown = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "evaluated {} scenes: final_metric {} (srcc {} plcc {} krcc {}); wrote {}",
        report.per_scene.len(),
        shown(report.final_metric),
        shown(report.median_srcc),
        shown(report.median_plcc),
        shown(report.median_krcc),
        args.out.display()
    );
    Ok(())
}

fn run_leaderboard(args: &LeaderboardArgs) -> Result<(), CliError> {
    for path in &args.reports {
        require_file(path, "report")?;
    }
    let mut entries: Vec<(String, MetricReport)> = Vec::with_capacity(args.reports.len());
    for path in &args.reports {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        let report = MetricReport::from_json(&text)
            .map_err(|e| CliError::Runtime(format!("cannot parse {}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        entries.push((name, report));
    }
    let rows = metrics::leaderboard(&entries);
    let cell = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.6}"));
    println!(
        "{:<5} {:<24} {:>10} {:>10} {:>10} {:>10}",
        "rank", "name", "final", "srcc", "plcc", "krcc"
    );
    for row in rows {
        println!(
            "{:<5} {:<24} {:>10} {:>10} {:>10} {:>10}",
            row.rank,
            row.name,
            cell(row.final_metric),
            cell(row.median_srcc),
            cell(row.median_plcc),
            cell(row.median_krcc)
        );
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args),
        Command::Predict(args) => run_predict(args),
        Command::Eval(args) => run_eval(args),
        Command::Leaderboard(args) => run_leaderboard(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
