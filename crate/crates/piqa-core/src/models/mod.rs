//! Toy-scale, fully differentiable quality models.
//!
//! Five families share one parameter convention: a flat `Vec<f64>` with
//! layout ranges computed from the config, so the training loop can lift
//! every parameter onto the gradient tape and the checkpoint format stays
//! a single array.

mod gated;
mod hyper;
mod monet;
mod rescale;

pub use gated::{scene_regressor_bank, GatedConfig, GatedModel, RegressorMode};
pub use hyper::{target_forward, BackboneOutput, HyperConfig, HyperModel, TargetLayer, TargetParams};
pub use monet::{MalBlock, MonetConfig, MonetModel};
pub use rescale::{fhiqa_rescale, sem_rescale, SceneProbs, SceneScaleTable};

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Scalar;
use crate::rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("scene scale table is empty")]
    EmptyTable,
    #[error("scene probabilities ({probs}) and table ({table}) cover different scene counts")]
    TableMismatch { probs: usize, table: usize },
    #[error("scene index {index} out of range for {n_scenes} scenes")]
    UnknownScene { index: usize, n_scenes: usize },
    #[error("invalid scene probabilities: {0}")]
    BadProbs(String),
    #[error("model requires at least one scene")]
    NoScenes,
    #[error("expected {expected} opinion features, got {found}")]
    WrongOpinionCount { expected: usize, found: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Allocates contiguous ranges in a flat parameter vector.
#[derive(Debug, Default, Clone)]
pub(crate) struct LayoutBuilder {
    next: usize,
}

impl LayoutBuilder {
    pub(crate) fn range(&mut self, len: usize) -> Range<usize> {
        let start = self.next;
        self.next += len;
        start..self.next
    }

    pub(crate) fn total(&self) -> usize {
        self.next
    }
}

pub(crate) mod linalg {
    use super::Scalar;

    pub(crate) fn lift_slice<S: Scalar>(ctx: S, xs: &[f64]) -> Vec<S> {
        xs.iter().map(|&x| ctx.lift(x)).collect()
    }

    /// `w` is row-major `out_dim x in_dim`.
    pub(crate) fn affine<S: Scalar>(w: &[S], b: &[S], x: &[S]) -> Vec<S> {
        let in_dim = x.len();
        debug_assert_eq!(w.len(), in_dim * b.len());
        if in_dim == 0 {
            return b.to_vec();
        }
        b.iter()
            .zip(w.chunks_exact(in_dim))
            .map(|(&bias, row)| {
                let mut acc = bias;
                for (&wk, &xk) in row.iter().zip(x) {
                    acc = acc + wk * xk;
                }
                acc
            })
            .collect()
    }

    /// Numerically stable softmax; the value-level max shift leaves both
    /// the value and the gradient of the shift-invariant map unchanged.
    pub(crate) fn softmax<S: Scalar>(logits: &[S]) -> Vec<S> {
        debug_assert!(!logits.is_empty());
        let max = logits
            .iter()
            .map(|l| l.value())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<S> = logits.iter().map(|&l| (l - l.lift(max)).exp()).collect();
        let mut denom = exps[0];
        for &e in &exps[1..] {
            denom = denom + e;
        }
        exps.into_iter().map(|e| e / denom).collect()
    }

    pub(crate) fn map_tanh<S: Scalar>(xs: Vec<S>) -> Vec<S> {
        xs.into_iter().map(Scalar::tanh).collect()
    }

    pub(crate) fn map_sigmoid<S: Scalar>(xs: Vec<S>) -> Vec<S> {
        xs.into_iter().map(Scalar::sigmoid).collect()
    }

    pub(crate) fn map_relu<S: Scalar>(xs: Vec<S>) -> Vec<S> {
        xs.into_iter().map(Scalar::relu).collect()
    }
}

/// Fill a weight range with `N(0, 1/fan_in)` entries.
pub(crate) fn init_weight<R: rand::Rng>(params: &mut [f64], range: Range<usize>, fan_in: usize, rng: &mut R) {
    let scale = 1.0 / (fan_in.max(1) as f64).sqrt();
    for slot in &mut params[range] {
        *slot = scale * rng::standard_normal(rng);
    }
}

/// Model selector shared by the CLI, checkpoints and the training config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hyper,
    Sem,
    Fhiqa,
    Monet,
    Gated,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Hyper,
        ModelKind::Sem,
        ModelKind::Fhiqa,
        ModelKind::Monet,
        ModelKind::Gated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Hyper => "hyper",
            ModelKind::Sem => "sem",
            ModelKind::Fhiqa => "fhiqa",
            ModelKind::Monet => "monet",
            ModelKind::Gated => "gated",
        }
    }
}

/// Per-kind architecture dimensions, serialized into checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Hyper(HyperConfig),
    Sem(HyperConfig),
    Fhiqa(HyperConfig),
    Monet(MonetConfig),
    Gated(GatedConfig),
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Hyper(_) => ModelKind::Hyper,
            ModelSpec::Sem(_) => ModelKind::Sem,
            ModelSpec::Fhiqa(_) => ModelKind::Fhiqa,
            ModelSpec::Monet(_) => ModelKind::Monet,
            ModelSpec::Gated(_) => ModelKind::Gated,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ModelSpec::Hyper(c) | ModelSpec::Sem(c) | ModelSpec::Fhiqa(c) => c.feature_dim,
            ModelSpec::Monet(c) => c.feature_dim,
            ModelSpec::Gated(c) => c.feature_dim,
        }
    }

    /// Toy default dimensions for a model kind.
    pub fn toy(kind: ModelKind, feature_dim: usize) -> Self {
        match kind {
            ModelKind::Hyper => ModelSpec::Hyper(HyperConfig::toy(feature_dim)),
            ModelKind::Sem => ModelSpec::Sem(HyperConfig::toy(feature_dim)),
            ModelKind::Fhiqa => ModelSpec::Fhiqa(HyperConfig::toy(feature_dim)),
            ModelKind::Monet => ModelSpec::Monet(MonetConfig::toy(feature_dim)),
            ModelKind::Gated => ModelSpec::Gated(GatedConfig::toy(feature_dim)),
        }
    }
}

/// A quality model: flat parameters plus the layout to interpret them.
// Variant sizes differ by a few hundred bytes of layout metadata; models
// are created once per run, so boxing would only add indirection.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Model {
    Hyper(HyperModel),
    Sem(HyperModel),
    Fhiqa(HyperModel),
    Monet(MonetModel),
    Gated(GatedModel),
}

/// How the hyper-family turns a pre-quality score into the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RescaleMode {
    None,
    ArgmaxScene,
    ProbWeighted,
}

impl Model {
    /// Build a freshly initialized model with toy dimensions.
    pub fn new(
        kind: ModelKind,
        feature_dim: usize,
        scenes: Vec<String>,
        seed: u64,
    ) -> Result<Model, ModelError> {
        Model::with_spec(ModelSpec::toy(kind, feature_dim), scenes, seed)
    }

    /// Build from explicit dimensions.
    pub fn with_spec(spec: ModelSpec, scenes: Vec<String>, seed: u64) -> Result<Model, ModelError> {
        let needs_scenes = !matches!(spec, ModelSpec::Hyper(_));
        if needs_scenes && scenes.is_empty() {
            return Err(ModelError::NoScenes);
        }
        let mut rng = rng::stream(seed, &format!("model-init/{}", spec.kind().name()));
        Ok(match spec {
            ModelSpec::Hyper(c) => Model::Hyper(HyperModel::new(c, scenes, false, &mut rng)),
            ModelSpec::Sem(c) => Model::Sem(HyperModel::new(c, scenes, true, &mut rng)),
            ModelSpec::Fhiqa(c) => Model::Fhiqa(HyperModel::new(c, scenes, true, &mut rng)),
            ModelSpec::Monet(c) => Model::Monet(MonetModel::new(c, scenes, &mut rng)),
            ModelSpec::Gated(c) => Model::Gated(GatedModel::new(c, scenes, &mut rng)),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Hyper(_) => ModelKind::Hyper,
            Model::Sem(_) => ModelKind::Sem,
            Model::Fhiqa(_) => ModelKind::Fhiqa,
            Model::Monet(_) => ModelKind::Monet,
            Model::Gated(_) => ModelKind::Gated,
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Hyper(m) => ModelSpec::Hyper(m.config().clone()),
            Model::Sem(m) => ModelSpec::Sem(m.config().clone()),
            Model::Fhiqa(m) => ModelSpec::Fhiqa(m.config().clone()),
            Model::Monet(m) => ModelSpec::Monet(m.config().clone()),
            Model::Gated(m) => ModelSpec::Gated(m.config().clone()),
        }
    }

    pub fn scenes(&self) -> &[String] {
        match self {
            Model::Hyper(m) | Model::Sem(m) | Model::Fhiqa(m) => m.scenes(),
            Model::Monet(m) => m.scenes(),
            Model::Gated(m) => m.scenes(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.spec().feature_dim()
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::Hyper(m) | Model::Sem(m) | Model::Fhiqa(m) => m.params(),
            Model::Monet(m) => m.params(),
            Model::Gated(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Hyper(m) | Model::Sem(m) | Model::Fhiqa(m) => m.params_mut(),
            Model::Monet(m) => m.params_mut(),
            Model::Gated(m) => m.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Generic forward pass over lifted parameters. `train_scene` selects
    /// the true-scene path where a model distinguishes train from test.
    pub fn forward<S: Scalar>(
        &self,
        params: &[S],
        features: &[f64],
        train_scene: Option<usize>,
    ) -> Result<S, ModelError> {
        match self {
            Model::Hyper(m) => m.forward(params, features, RescaleMode::None),
            Model::Sem(m) => m.forward(params, features, RescaleMode::ArgmaxScene),
            Model::Fhiqa(m) => m.forward(params, features, RescaleMode::ProbWeighted),
            Model::Monet(m) => m.forward(params, features),
            Model::Gated(m) => m.forward(params, features, train_scene),
        }
    }

    /// Plain-`f64` inference path using the model's own parameters.
    pub fn score(&self, features: &[f64]) -> Result<f64, ModelError> {
        self.forward(self.params(), features, None)
    }

    /// Scene probabilities for a feature vector, when the model has a
    /// scene head.
    pub fn scene_probs(&self, features: &[f64]) -> Result<Option<SceneProbs>, ModelError> {
        match self {
            Model::Hyper(_) => Ok(None),
            Model::Sem(m) | Model::Fhiqa(m) => m.scene_probs(features).map(Some),
            Model::Monet(m) => m.score_and_probs(m.params(), features).map(|(_, p)| Some(p)),
            Model::Gated(m) => m.scene_probs(features).map(Some),
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "piqa-checkpoint/v1";

/// Self-describing checkpoint: format tag, architecture, scene list and
/// the flat parameter array.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: ModelSpec,
    pub scenes: Vec<String>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: model.spec(),
            scenes: model.scenes().to_vec(),
            params: model.params().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<Model, ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint format {:?}, expected {CHECKPOINT_FORMAT:?}",
                self.format
            )));
        }
        let mut model = Model::with_spec(self.spec, self.scenes, 0)?;
        if self.params.len() != model.param_count() {
            return Err(ModelError::Checkpoint(format!(
                "parameter count {} does not match architecture ({})",
                self.params.len(),
                model.param_count()
            )));
        }
        model.params_mut().copy_from_slice(&self.params);
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let json = serde_json::to_string(self)
            .map_err(|e| ModelError::Checkpoint(format!("serialize failed: {e}")))?;
        std::fs::write(path, json).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| ModelError::Checkpoint(format!("parse failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene_list(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("scene_{i:03}")).collect()
    }

    #[test]
    fn every_kind_builds_and_scores() {
        let features = vec![0.1; 16];
        for kind in ModelKind::ALL {
            let model = Model::new(kind, 16, scene_list(3), 7).unwrap();
            let score = model.score(&features).unwrap();
            assert!(score.is_finite(), "{kind:?}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let features: Vec<f64> = (0..16).map(|i| (i as f64) * 0.05 - 0.4).collect();
        for kind in ModelKind::ALL {
            let a = Model::new(kind, 16, scene_list(4), 11).unwrap();
            let b = Model::new(kind, 16, scene_list(4), 11).unwrap();
            assert_eq!(
                a.score(&features).unwrap().to_bits(),
                b.score(&features).unwrap().to_bits(),
                "{kind:?}"
            );
        }
    }

    #[test]
    fn scene_models_require_scenes() {
        assert!(matches!(
            Model::new(ModelKind::Sem, 8, vec![], 0),
            Err(ModelError::NoScenes)
        ));
        assert!(Model::new(ModelKind::Hyper, 8, vec![], 0).is_ok());
    }

    #[test]
    fn rejects_wrong_feature_dim() {
        let model = Model::new(ModelKind::Hyper, 16, vec![], 0).unwrap();
        assert!(matches!(
            model.score(&[0.0; 4]),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips() {
        let dir = std::env::temp_dir().join("piqa-checkpoint-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");

        let model = Model::new(ModelKind::Fhiqa, 12, scene_list(3), 5).unwrap();
        Checkpoint::from_model(&model).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap().into_model().unwrap();
        assert_eq!(loaded.kind(), ModelKind::Fhiqa);
        assert_eq!(loaded.params(), model.params());
        assert_eq!(loaded.scenes(), model.scenes());

        let features = vec![0.3; 12];
        assert_eq!(
            loaded.score(&features).unwrap().to_bits(),
            model.score(&features).unwrap().to_bits()
        );
    }

    #[test]
    fn checkpoint_rejects_foreign_format() {
        let model = Model::new(ModelKind::Hyper, 8, vec![], 0).unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.format = "piqa-checkpoint/v999".to_string();
        assert!(matches!(
            ckpt.into_model(),
            Err(ModelError::Checkpoint(_))
        ));
    }

    #[test]
    fn checkpoint_rejects_wrong_param_count() {
        let model = Model::new(ModelKind::Hyper, 8, vec![], 0).unwrap();
        let mut ckpt = Checkpoint::from_model(&model);
        ckpt.params.pop();
        assert!(matches!(ckpt.into_model(), Err(ModelError::Checkpoint(_))));
    }
}
