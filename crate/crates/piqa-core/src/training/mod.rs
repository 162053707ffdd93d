//! Training engine: scene-balanced batches, per-loss batch assembly,
//! learning-rate schedules and lowest-loss checkpoint selection.

mod optimizer;
mod sampler;
mod schedule;

pub use optimizer::{OptimKind, Optimizer, OptimizerConfig};
pub use sampler::{
    sample_pairs, sample_patch_origins, sample_patch_views, scene_balanced_batches, Batch,
    BatchSpec, PatchOrigin, SceneGroup,
};
pub use schedule::{lr_at, ScheduleSpec};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, Tape, Var};
use crate::data::{DataError, FeatureStore, Manifest};
use crate::losses::{
    fidelity_loss, huber_loss, merged_rank_loss, pair_label, patch_loss, ssi_loss, LossError,
};
use crate::models::{Model, ModelError, ModelKind};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("manifest has {found} scene(s); the batch spec needs {need}")]
    TooFewScenes { found: usize, need: usize },
    #[error("source ({src_h}x{src_w}) is smaller than the patch size {size}")]
    SourceTooSmall {
        src_h: usize,
        src_w: usize,
        size: usize,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

/// Training objective selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Ssi,
    Merged,
    Fidelity,
    Patch,
    Huber,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Ssi,
        LossKind::Merged,
        LossKind::Fidelity,
        LossKind::Patch,
        LossKind::Huber,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ssi => "ssi",
            LossKind::Merged => "merged",
            LossKind::Fidelity => "fidelity",
            LossKind::Patch => "patch",
            LossKind::Huber => "huber",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub loss: LossKind,
    pub batch: BatchSpec,
    pub schedule: ScheduleSpec,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Patch-loss only: jittered views per image.
    pub patches_per_image: usize,
    /// Patch-loss only: jitter standard deviation of those views.
    pub patch_jitter_sd: f64,
    /// Huber-loss only: the quadratic/linear transition point.
    pub huber_delta: f64,
    /// Learning-rate multiplier for freshly initialized parameter groups
    /// relative to pretrained ones. Every toy model here is fully fresh,
    /// so there is no pretrained group to scale against and the value is
    /// recorded without effect.
    pub fresh_lr_multiplier: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Hyper,
            loss: LossKind::Ssi,
            batch: BatchSpec::default(),
            schedule: ScheduleSpec::step(1e-2),
            epochs: 100,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            patches_per_image: 4,
            patch_jitter_sd: 0.05,
            huber_delta: crate::losses::DEFAULT_HUBER_DELTA,
            fresh_lr_multiplier: 10.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be >= 1".to_string()));
        }
        self.batch.validate()?;
        self.schedule.validate()?;
        if self.loss == LossKind::Patch {
            if self.patches_per_image == 0 {
                return Err(TrainError::BadConfig(
                    "patches_per_image must be >= 1 for the patch loss".to_string(),
                ));
            }
            if self.patch_jitter_sd.is_nan() || self.patch_jitter_sd < 0.0 {
                return Err(TrainError::BadConfig(
                    "patch_jitter_sd must be >= 0".to_string(),
                ));
            }
        }
        if self.loss == LossKind::Huber && (self.huber_delta.is_nan() || self.huber_delta <= 0.0) {
            return Err(TrainError::BadConfig(
                "huber_delta must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Per-epoch training record. `is_best` marks epochs whose mean loss set
/// a new minimum; the last such epoch is the selected checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    pub is_best: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// The model restored to its lowest-training-loss snapshot.
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

struct RecordView<'a> {
    features: &'a [f64],
    jod: f64,
    scene_idx: usize,
}

fn mean_of<S: Scalar>(terms: &[S]) -> S {
    debug_assert!(!terms.is_empty());
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = acc + t;
    }
    acc * acc.lift(1.0 / terms.len() as f64)
}

fn batch_loss<'t>(
    model: &Model,
    params: &[Var<'t>],
    batch: &Batch,
    views: &[RecordView<'_>],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Var<'t>, TrainError> {
    let lift = |c: f64| params[0].lift(c);
    let forward = |idx: usize| -> Result<Var<'t>, TrainError> {
        let view = &views[idx];
        Ok(model.forward(params, view.features, Some(view.scene_idx))?)
    };

    match config.loss {
        LossKind::Ssi => {
            let mut pred_groups = Vec::with_capacity(batch.groups.len());
            let mut gt_groups = Vec::with_capacity(batch.groups.len());
            for group in &batch.groups {
                let mut preds = Vec::with_capacity(group.records.len());
                let mut gts = Vec::with_capacity(group.records.len());
                for &idx in &group.records {
                    preds.push(forward(idx)?);
                    gts.push(lift(views[idx].jod));
                }
                pred_groups.push(preds);
                gt_groups.push(gts);
            }
            Ok(ssi_loss(&pred_groups, &gt_groups)?)
        }
        LossKind::Merged => {
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for group in &batch.groups {
                // Consecutive pairing stays within the scene; an odd
                // sample count drops the trailing record.
                let take = group.records.len() & !1;
                for &idx in &group.records[..take] {
                    preds.push(forward(idx)?);
                    gts.push(lift(views[idx].jod));
                }
            }
            Ok(merged_rank_loss(&preds, &gts)?)
        }
        LossKind::Fidelity => {
            let mut terms = Vec::new();
            for group in &batch.groups {
                let preds: Vec<Var<'t>> = group
                    .records
                    .iter()
                    .map(|&idx| forward(idx))
                    .collect::<Result<_, _>>()?;
                let positions: Vec<usize> = (0..group.records.len()).collect();
                for (a, b) in sample_pairs(&positions, rng)? {
                    let label = pair_label(views[group.records[a]].jod, views[group.records[b]].jod);
                    terms.push(fidelity_loss(preds[a], preds[b], label));
                }
            }
            Ok(mean_of(&terms))
        }
        LossKind::Patch => {
            let mut terms = Vec::new();
            for group in &batch.groups {
                for &idx in &group.records {
                    let view = &views[idx];
                    let patches = sample_patch_views(
                        view.features,
                        config.patches_per_image,
                        config.patch_jitter_sd,
                        rng,
                    );
                    let preds: Vec<Var<'t>> = patches
                        .iter()
                        .map(|p| Ok(model.forward(params, p, Some(view.scene_idx))?))
                        .collect::<Result<_, TrainError>>()?;
                    terms.push(patch_loss(&preds, lift(view.jod))?);
                }
            }
            Ok(mean_of(&terms))
        }
        LossKind::Huber => {
            let mut preds = Vec::new();
            let mut gts = Vec::new();
            for group in &batch.groups {
                for &idx in &group.records {
                    preds.push(forward(idx)?);
                    gts.push(lift(views[idx].jod));
                }
            }
            Ok(huber_loss(&preds, &gts, config.huber_delta)?)
        }
    }
}

/// Train a freshly initialized model on the manifest. Fully deterministic
/// given the config seed; returns the lowest-loss snapshot and the
/// per-epoch history.
pub fn train(
    config: &TrainConfig,
    manifest: &Manifest,
    features: &FeatureStore,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let scenes: Vec<String> = manifest.scene_ids().iter().map(|s| s.to_string()).collect();
    let scene_index: BTreeMap<&str, usize> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let views: Vec<RecordView> = manifest
        .records()
        .iter()
        .map(|rec| -> Result<RecordView, TrainError> {
            Ok(RecordView {
                features: features.require(&rec.image_id)?,
                jod: rec.jod_overall,
                scene_idx: scene_index[rec.scene_id.as_str()],
            })
        })
        .collect::<Result<_, _>>()?;
    if features.dim() == 0 {
        return Err(TrainError::BadConfig("feature store is empty".to_string()));
    }

    let mut model = Model::new(config.model, features.dim(), scenes, config.seed)?;
    let mut optimizer = Optimizer::new(config.optimizer, model.param_count());
    let mut history: Vec<EpochStats> = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let tape = Tape::with_capacity(1 << 16);

    for epoch in 0..config.epochs {
        let lr = lr_at(&config.schedule, epoch);
        let epoch_seed = config.seed ^ rng::label_hash(&format!("train-epoch/{epoch}"));
        let batches = scene_balanced_batches(manifest, &config.batch, epoch_seed)?;
        let mut batch_rng = rng::stream(config.seed, &format!("train-draws/{epoch}"));
        let mut loss_sum = 0.0;
        for batch in &batches {
            tape.clear();
            let param_vars: Vec<Var> = model.params().iter().map(|&p| tape.var(p)).collect();
            let loss = batch_loss(&model, &param_vars, batch, &views, config, &mut batch_rng)?;
            let loss_val = loss.val();
            if !loss_val.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    loss: loss_val,
                });
            }
            let grads = tape.gradients(loss);
            let grad_vec: Vec<f64> = param_vars.iter().map(|&v| grads.wrt(v)).collect();
            optimizer.step(model.params_mut(), &grad_vec, lr);
            loss_sum += loss_val;
        }
        let epoch_loss = loss_sum / batches.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        let is_best = best.as_ref().is_none_or(|(b, _, _)| epoch_loss < *b);
        if is_best {
            best = Some((epoch_loss, epoch, model.params().to_vec()));
        }
        history.push(EpochStats {
            epoch,
            loss: epoch_loss,
            lr,
            is_best,
        });
    }

    let (best_loss, best_epoch, best_params) = best.expect("at least one epoch ran");
    model.params_mut().copy_from_slice(&best_params);
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_loss,
    })
}

/// History CSV: `epoch,loss,lr,checkpoint_flag`.
pub fn history_to_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,lr,checkpoint_flag\n");
    for row in history {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            row.epoch,
            row.loss,
            row.lr,
            u8::from(row.is_best)
        );
    }
    out
}

pub fn save_history(history: &[EpochStats], path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, history_to_csv(history)).map_err(|source| {
        TrainError::Data(DataError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}
