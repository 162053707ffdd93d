//! Test-time augmentation and model ensembling.
//!
//! Crop geometry is computed exactly for spatial sources; synthetic
//! feature vectors have no spatial extent, so every multi-view mode
//! degrades to seeded jitter views of the vector and the averaging
//! pipeline stays testable. Per-image scores are the arithmetic mean of
//! the per-view scores; ensembles average per-image over models.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, FeatureStore, Manifest};
use crate::models::{Model, ModelError};
use crate::rng;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("source ({src_h}x{src_w}) is smaller than the crop size {crop}")]
    SourceTooSmall {
        src_h: usize,
        src_w: usize,
        crop: usize,
    },
    #[error("invalid TTA spec: {0}")]
    BadSpec(String),
    #[error("prediction sets cover different images (first difference: {0:?})")]
    CoverageMismatch(String),
    #[error("ensemble needs at least one prediction set")]
    EmptyEnsemble,
    #[error("malformed predictions CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
}

/// Augmentation mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TtaMode {
    /// The identity view only.
    None,
    /// Four corners plus center.
    FiveCrop,
    /// Five-crop plus the flipped copy of each view.
    TenCrop,
    /// `k` seeded random crops.
    Rand { k: usize },
    /// Seven deterministic crops: four corners, top-center,
    /// bottom-center, center.
    CornersCenter,
    /// `n` patches on a uniform grid covering the source.
    Dense { n: usize },
}

impl TtaMode {
    /// Number of views the mode produces.
    pub fn view_count(&self) -> usize {
        match *self {
            TtaMode::None => 1,
            TtaMode::FiveCrop => 5,
            TtaMode::TenCrop => 10,
            TtaMode::Rand { k } => k,
            TtaMode::CornersCenter => 7,
            TtaMode::Dense { n } => n,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        match *self {
            TtaMode::Rand { k: 0 } => {
                Err(InferenceError::BadSpec("rand crop count must be >= 1".into()))
            }
            TtaMode::Dense { n: 0 } => {
                Err(InferenceError::BadSpec("dense patch count must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TtaSpec {
    pub mode: TtaMode,
    pub seed: u64,
    /// Jitter standard deviation for feature-vector views; 0 makes every
    /// view identical to the source.
    pub jitter_sd: f64,
}

impl TtaSpec {
    pub fn none() -> Self {
        Self {
            mode: TtaMode::None,
            seed: 0,
            jitter_sd: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        self.mode.validate()?;
        if self.jitter_sd.is_nan() || self.jitter_sd < 0.0 {
            return Err(InferenceError::BadSpec("jitter_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// One crop of a spatial source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropView {
    pub row: usize,
    pub col: usize,
    pub flipped: bool,
}

/// Deterministic crop geometry for a `src_h x src_w` source and square
/// crops of side `crop`.
pub fn crop_views(
    mode: &TtaMode,
    src_h: usize,
    src_w: usize,
    crop: usize,
    seed: u64,
) -> Result<Vec<CropView>, InferenceError> {
    mode.validate()?;
    if src_h < crop || src_w < crop {
        return Err(InferenceError::SourceTooSmall { src_h, src_w, crop });
    }
    let max_r = src_h - crop;
    let max_c = src_w - crop;
    let at = |row: usize, col: usize| CropView {
        row,
        col,
        flipped: false,
    };
    let center = at(max_r / 2, max_c / 2);
    let corners = [at(0, 0), at(0, max_c), at(max_r, 0), at(max_r, max_c)];
    Ok(match *mode {
        TtaMode::None => vec![center],
        TtaMode::FiveCrop => {
            let mut v = corners.to_vec();
            v.push(center);
            v
        }
        TtaMode::TenCrop => {
            let mut v = corners.to_vec();
            v.push(center);
            let flipped: Vec<CropView> = v
                .iter()
                .map(|c| CropView {
                    flipped: true,
                    ..*c
                })
                .collect();
            v.extend(flipped);
            v
        }
        TtaMode::CornersCenter => {
            let mut v = corners.to_vec();
            v.push(at(0, max_c / 2)); // top-center
            v.push(at(max_r, max_c / 2)); // bottom-center
            v.push(center);
            v
        }
        TtaMode::Rand { k } => {
            let mut rng = rng::stream(seed, "tta/rand-crops");
            (0..k)
                .map(|_| {
                    use rand::Rng;
                    at(rng.random_range(0..=max_r), rng.random_range(0..=max_c))
                })
                .collect()
        }
        TtaMode::Dense { n } => {
            let cols = (n as f64).sqrt().ceil() as usize;
            let rows = n.div_ceil(cols);
            let pos = |i: usize, count: usize, max: usize| -> usize {
                if count <= 1 {
                    max / 2
                } else {
                    // Evenly spaced including both endpoints; rounding
                    // clamps the last row/column onto the source.
                    ((i as f64) * (max as f64) / ((count - 1) as f64)).round() as usize
                }
            };
            (0..n)
                .map(|i| at(pos(i / cols, rows, max_r), pos(i % cols, cols, max_c)))
                .collect()
        }
    })
}

/// Views of a feature vector under the spec: the identity for
/// [`TtaMode::None`], seeded jitter copies otherwise. Deterministic given
/// `(spec, image_id)`.
pub fn tta_views(
    features: &[f64],
    spec: &TtaSpec,
    image_id: &str,
) -> Result<Vec<Vec<f64>>, InferenceError> {
    spec.validate()?;
    let count = spec.mode.view_count();
    if matches!(spec.mode, TtaMode::None) {
        return Ok(vec![features.to_vec()]);
    }
    let image_seed = spec.seed ^ rng::label_hash(image_id);
    let mut views = Vec::with_capacity(count);
    for i in 0..count {
        let mut view_rng = rng::stream(image_seed, &format!("tta-view/{i}"));
        let view = features
            .iter()
            .map(|&v| {
                if spec.jitter_sd > 0.0 {
                    v + spec.jitter_sd * rng::standard_normal(&mut view_rng)
                } else {
                    v
                }
            })
            .collect();
        views.push(view);
    }
    Ok(views)
}

/// Scores for every image of a manifest, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub scores: BTreeMap<String, f64>,
    pub model: String,
    pub tta: TtaSpec,
}

/// Predict every manifest image as the mean of its per-view scores.
pub fn predict(
    model: &Model,
    manifest: &Manifest,
    features: &FeatureStore,
    spec: &TtaSpec,
) -> Result<PredictionSet, InferenceError> {
    spec.validate()?;
    let mut scores = BTreeMap::new();
    for rec in manifest.records() {
        let feature = features.require(&rec.image_id)?;
        let views = tta_views(feature, spec, &rec.image_id)?;
        let mut sum = 0.0;
        for view in &views {
            sum += model.score(view)?;
        }
        scores.insert(rec.image_id.clone(), sum / views.len() as f64);
    }
    Ok(PredictionSet {
        scores,
        model: model.kind().name().to_string(),
        tta: *spec,
    })
}

/// Equal-weight per-image mean over prediction sets with identical
/// coverage.
pub fn ensemble_mean(sets: &[PredictionSet]) -> Result<PredictionSet, InferenceError> {
    let first = sets.first().ok_or(InferenceError::EmptyEnsemble)?;
    for set in &sets[1..] {
        if set.scores.len() != first.scores.len() {
            let diff = set
                .scores
                .keys()
                .find(|k| !first.scores.contains_key(*k))
                .or_else(|| first.scores.keys().find(|k| !set.scores.contains_key(*k)))
                .cloned()
                .unwrap_or_default();
            return Err(InferenceError::CoverageMismatch(diff));
        }
        if let Some(missing) = set.scores.keys().find(|k| !first.scores.contains_key(*k)) {
            return Err(InferenceError::CoverageMismatch(missing.clone()));
        }
    }
    let inv = 1.0 / sets.len() as f64;
    let mut scores = BTreeMap::new();
    for (id, &score) in &first.scores {
        let mut sum = score;
        for set in &sets[1..] {
            sum += set.scores[id];
        }
        scores.insert(id.clone(), sum * inv);
    }
    Ok(PredictionSet {
        scores,
        model: format!("ensemble({})", sets.len()),
        tta: first.tta,
    })
}

/// Predictions CSV: `image_id,score` with scores at 6 decimals.
pub fn predictions_to_csv(scores: &BTreeMap<String, f64>) -> String {
    let mut out = String::from("image_id,score\n");
    for (id, score) in scores {
        let _ = writeln!(out, "{id},{score:.6}");
    }
    out
}

pub fn save_predictions(scores: &BTreeMap<String, f64>, path: &Path) -> Result<(), InferenceError> {
    std::fs::write(path, predictions_to_csv(scores)).map_err(|source| {
        InferenceError::Data(DataError::Io {
            path: path.display().to_string(),
            source,
        })
    })
}

pub fn load_predictions(path: &Path) -> Result<BTreeMap<String, f64>, InferenceError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        InferenceError::Data(DataError::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    predictions_from_csv(&text)
}

pub fn predictions_from_csv(text: &str) -> Result<BTreeMap<String, f64>, InferenceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "image_id,score")) => {}
        Some((_, other)) => {
            return Err(InferenceError::MalformedCsv {
                line: 1,
                reason: format!("expected header \"image_id,score\", found {other:?}"),
            })
        }
        None => {
            return Err(InferenceError::MalformedCsv {
                line: 1,
                reason: "empty file".to_string(),
            })
        }
    }
    let mut scores = BTreeMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let (id, score) = line
            .split_once(',')
            .ok_or_else(|| InferenceError::MalformedCsv {
                line: line_no,
                reason: "expected two comma-separated fields".to_string(),
            })?;
        let value = score
            .trim()
            .parse::<f64>()
            .map_err(|_| InferenceError::MalformedCsv {
                line: line_no,
                reason: format!("cannot parse score {score:?}"),
            })?;
        if scores.insert(id.trim().to_string(), value).is_some() {
            return Err(InferenceError::MalformedCsv {
                line: line_no,
                reason: format!("duplicate image_id {id:?}"),
            });
        }
    }
    Ok(scores)
}
