//! Scene-adaptive global/local regression with gated fusion.
//!
//! Two embeddings of the input (a "global" and a "local" view) each feed
//! a bank of per-scene affine regressors. Training applies the true
//! scene's regressor; inference takes the expectation under the predicted
//! scene probabilities. A small gating MLP blends the two branch scores
//! through a sigmoid weight, so the output always lies between them.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::linalg::{affine, lift_slice, map_relu, map_tanh, softmax};
use super::rescale::SceneProbs;
use super::{init_weight, LayoutBuilder, ModelError};
use crate::autodiff::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub gate_hidden: [usize; 2],
}

impl GatedConfig {
    pub fn toy(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            embed_dim: 8,
            gate_hidden: [16, 8],
        }
    }
}

/// How [`scene_regressor_bank`] selects regressors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorMode {
    /// Apply the known scene's regressor (training path).
    TrainScene(usize),
    /// Expectation over the predicted scene probabilities (test path).
    TestProbs,
}

/// Evaluate a bank of per-scene affine regressors. `weights` is row-major
/// `n_scenes x embed_dim` and `biases` has one entry per scene.
pub fn scene_regressor_bank<S: Scalar>(
    embedding: &[S],
    scene_probs: &[S],
    weights: &[S],
    biases: &[S],
    mode: RegressorMode,
) -> Result<S, ModelError> {
    let n_scenes = biases.len();
    if n_scenes == 0 {
        return Err(ModelError::EmptyTable);
    }
    if weights.len() != n_scenes * embedding.len() {
        return Err(ModelError::DimensionMismatch {
            what: "regressor bank weights",
            expected: n_scenes * embedding.len(),
            found: weights.len(),
        });
    }
    let apply = |scene: usize| -> S {
        let base = scene * embedding.len();
        let mut acc = biases[scene];
        for (k, &e) in embedding.iter().enumerate() {
            acc = acc + weights[base + k] * e;
        }
        acc
    };
    match mode {
        RegressorMode::TrainScene(scene) => {
            if scene >= n_scenes {
                return Err(ModelError::UnknownScene {
                    index: scene,
                    n_scenes,
                });
            }
            Ok(apply(scene))
        }
        RegressorMode::TestProbs => {
            if scene_probs.len() != n_scenes {
                return Err(ModelError::TableMismatch {
                    probs: scene_probs.len(),
                    table: n_scenes,
                });
            }
            let mut acc: Option<S> = None;
            for (scene, &w) in scene_probs.iter().enumerate() {
                let term = w * apply(scene);
                acc = Some(match acc {
                    Some(a) => a + term,
                    None => term,
                });
            }
            Ok(acc.expect("non-empty bank"))
        }
    }
}

#[derive(Debug, Clone)]
struct GatedLayout {
    w_global: Range<usize>,
    b_global: Range<usize>,
    w_local: Range<usize>,
    b_local: Range<usize>,
    w_scene: Range<usize>,
    b_scene: Range<usize>,
    bank_global_w: Range<usize>,
    bank_global_b: Range<usize>,
    bank_local_w: Range<usize>,
    bank_local_b: Range<usize>,
    gate_w1: Range<usize>,
    gate_b1: Range<usize>,
    gate_w2: Range<usize>,
    gate_b2: Range<usize>,
    gate_w3: Range<usize>,
    gate_b3: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct GatedModel {
    config: GatedConfig,
    scenes: Vec<String>,
    layout: GatedLayout,
    params: Vec<f64>,
}

impl GatedModel {
    pub(crate) fn new<R: rand::Rng>(config: GatedConfig, scenes: Vec<String>, rng: &mut R) -> Self {
        let c = &config;
        let n_scenes = scenes.len();
        let mut lb = LayoutBuilder::default();
        let w_global = lb.range(c.embed_dim * c.feature_dim);
        let b_global = lb.range(c.embed_dim);
        let w_local = lb.range(c.embed_dim * c.feature_dim);
        let b_local = lb.range(c.embed_dim);
        let w_scene = lb.range(n_scenes * c.embed_dim);
        let b_scene = lb.range(n_scenes);
        let bank_global_w = lb.range(n_scenes * c.embed_dim);
        let bank_global_b = lb.range(n_scenes);
        let bank_local_w = lb.range(n_scenes * c.embed_dim);
        let bank_local_b = lb.range(n_scenes);
        let gate_in = 2 * c.embed_dim;
        let [g1, g2] = c.gate_hidden;
        let gate_w1 = lb.range(g1 * gate_in);
        let gate_b1 = lb.range(g1);
        let gate_w2 = lb.range(g2 * g1);
        let gate_b2 = lb.range(g2);
        let gate_w3 = lb.range(g2);
        let gate_b3 = lb.range(1);

        let mut params = vec![0.0; lb.total()];
        init_weight(&mut params, w_global.clone(), c.feature_dim, rng);
        init_weight(&mut params, w_local.clone(), c.feature_dim, rng);
        init_weight(&mut params, w_scene.clone(), c.embed_dim, rng);
        init_weight(&mut params, bank_global_w.clone(), c.embed_dim, rng);
        init_weight(&mut params, bank_local_w.clone(), c.embed_dim, rng);
        init_weight(&mut params, gate_w1.clone(), gate_in, rng);
        init_weight(&mut params, gate_w2.clone(), g1, rng);
        init_weight(&mut params, gate_w3.clone(), g2, rng);

        Self {
            config,
            scenes,
            layout: GatedLayout {
                w_global,
                b_global,
                w_local,
                b_local,
                w_scene,
                b_scene,
                bank_global_w,
                bank_global_b,
                bank_local_w,
                bank_local_b,
                gate_w1,
                gate_b1,
                gate_w2,
                gate_b2,
                gate_w3,
                gate_b3,
            },
            params,
        }
    }

    pub fn config(&self) -> &GatedConfig {
        &self.config
    }

    pub fn scenes(&self) -> &[String] {
        &self.scenes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_inputs<S>(&self, params: &[S], features: &[f64]) -> Result<(), ModelError> {
        if features.len() != self.config.feature_dim {
            return Err(ModelError::DimensionMismatch {
                what: "feature vector",
                expected: self.config.feature_dim,
                found: features.len(),
            });
        }
        if params.len() != self.params.len() {
            return Err(ModelError::DimensionMismatch {
                what: "parameter vector",
                expected: self.params.len(),
                found: params.len(),
            });
        }
        Ok(())
    }

    fn gate_weight<S: Scalar>(&self, params: &[S], gate_input: &[S]) -> S {
        let l = &self.layout;
        let h1 = map_relu(affine(
            &params[l.gate_w1.clone()],
            &params[l.gate_b1.clone()],
            gate_input,
        ));
        let h2 = map_relu(affine(&params[l.gate_w2.clone()], &params[l.gate_b2.clone()], &h1));
        affine(&params[l.gate_w3.clone()], &params[l.gate_b3.clone()], &h2)[0].sigmoid()
    }

    pub(crate) fn forward<S: Scalar>(
        &self,
        params: &[S],
        features: &[f64],
        train_scene: Option<usize>,
    ) -> Result<S, ModelError> {
        self.check_inputs(params, features)?;
        let l = &self.layout;
        let x = lift_slice(params[0], features);
        let e_global = map_tanh(affine(&params[l.w_global.clone()], &params[l.b_global.clone()], &x));
        let e_local = map_tanh(affine(&params[l.w_local.clone()], &params[l.b_local.clone()], &x));
        let probs = softmax(&affine(
            &params[l.w_scene.clone()],
            &params[l.b_scene.clone()],
            &e_global,
        ));
        let mode = match train_scene {
            Some(scene) => RegressorMode::TrainScene(scene),
            None => RegressorMode::TestProbs,
        };
        let q_global = scene_regressor_bank(
            &e_global,
            &probs,
            &params[l.bank_global_w.clone()],
            &params[l.bank_global_b.clone()],
            mode,
        )?;
        let q_local = scene_regressor_bank(
            &e_local,
            &probs,
            &params[l.bank_local_w.clone()],
            &params[l.bank_local_b.clone()],
            mode,
        )?;
        let mut gate_input = e_global;
        gate_input.extend(e_local);
        let w = self.gate_weight(params, &gate_input);
        Ok(w * q_local + (w.lift(1.0) - w) * q_global)
    }

    /// Convex gated fusion of two branch scores with this model's gate.
    pub fn fuse(&self, q_global: f64, q_local: f64, gate_input: &[f64]) -> Result<f64, ModelError> {
        if gate_input.len() != 2 * self.config.embed_dim {
            return Err(ModelError::DimensionMismatch {
                what: "gate input",
                expected: 2 * self.config.embed_dim,
                found: gate_input.len(),
            });
        }
        let w = self.gate_weight(self.params.as_slice(), gate_input);
        Ok(w * q_local + (1.0 - w) * q_global)
    }

    /// Scene classification from the global embedding.
    pub fn scene_probs(&self, features: &[f64]) -> Result<SceneProbs, ModelError> {
        self.check_inputs(&self.params, features)?;
        let l = &self.layout;
        let x = lift_slice(self.params[0], features);
        let e_global = map_tanh(affine(
            &self.params[l.w_global.clone()],
            &self.params[l.b_global.clone()],
            &x,
        ));
        SceneProbs::new(softmax(&affine(
            &self.params[l.w_scene.clone()],
            &self.params[l.b_scene.clone()],
            &e_global,
        )))
    }

    /// Zero the gate parameters, pinning the fusion weight at sigmoid(0).
    #[cfg(test)]
    fn zero_gate(&mut self) {
        let l = self.layout.clone();
        for r in [l.gate_w1, l.gate_b1, l.gate_w2, l.gate_b2, l.gate_w3, l.gate_b3] {
            for slot in &mut self.params[r] {
                *slot = 0.0;
            }
        }
    }
}
