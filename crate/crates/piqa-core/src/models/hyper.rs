//! The hypernetwork quality family.
//!
//! A toy backbone splits a feature vector into a semantic vector (content
//! understanding) and a content vector. The hypernetwork turns the
//! semantic vector into the weights and biases of a 4-layer target
//! network, which scores the content vector. The scene variants correct
//! the resulting pre-quality score with a learnable per-scene table,
//! either by argmax scene or by probability weighting.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::linalg::{affine, lift_slice, map_sigmoid, map_tanh, softmax};
use super::rescale::{fhiqa_rescale, sem_rescale, SceneProbs, SceneScaleTable};
use super::{init_weight, LayoutBuilder, ModelError, RescaleMode};
use crate::autodiff::Scalar;

/// Dimensions of the hyper family. The target network always has four
/// fully connected layers: `content_dim -> h1 -> h2 -> h3 -> 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub feature_dim: usize,
    pub backbone_hidden: usize,
    pub semantic_dim: usize,
    pub content_dim: usize,
    pub trunk_dim: usize,
    pub target_hidden: [usize; 3],
}

impl HyperConfig {
    pub fn toy(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            backbone_hidden: 24,
            semantic_dim: 12,
            content_dim: 8,
            trunk_dim: 12,
            target_hidden: [6, 4, 2],
        }
    }

    /// `(out_dim, in_dim)` of the four target layers.
    pub fn target_shapes(&self) -> [(usize, usize); 4] {
        let [h1, h2, h3] = self.target_hidden;
        [(h1, self.content_dim), (h2, h1), (h3, h2), (1, h3)]
    }
}

/// Semantic and content features produced by the backbone.
#[derive(Debug, Clone)]
pub struct BackboneOutput<S> {
    pub semantic: Vec<S>,
    pub content: Vec<S>,
}

/// Generated weights and biases for the four target layers.
#[derive(Debug, Clone)]
pub struct TargetParams<S> {
    pub layers: Vec<TargetLayer<S>>,
}

#[derive(Debug, Clone)]
pub struct TargetLayer<S> {
    /// Row-major `out_dim x in_dim`.
    pub weight: Vec<S>,
    pub bias: Vec<S>,
    pub out_dim: usize,
    pub in_dim: usize,
}

/// Evaluate the target network: four affine layers with sigmoid hidden
/// activations and a linear scalar output.
pub fn target_forward<S: Scalar>(
    content: &[S],
    theta: &TargetParams<S>,
) -> Result<S, ModelError> {
    let (score, _) = target_forward_traced(content, theta)?;
    Ok(score)
}

/// Like [`target_forward`] but also returns each hidden activation.
pub(crate) fn target_forward_traced<S: Scalar>(
    content: &[S],
    theta: &TargetParams<S>,
) -> Result<(S, Vec<Vec<S>>), ModelError> {
    if theta.layers.len() != 4 {
        return Err(ModelError::DimensionMismatch {
            what: "target layer count",
            expected: 4,
            found: theta.layers.len(),
        });
    }
    let mut activation = content.to_vec();
    let mut hidden = Vec::with_capacity(3);
    for (i, layer) in theta.layers.iter().enumerate() {
        if layer.in_dim != activation.len() || layer.weight.len() != layer.out_dim * layer.in_dim
        {
            return Err(ModelError::DimensionMismatch {
                what: "target layer input",
                expected: layer.in_dim,
                found: activation.len(),
            });
        }
        let pre = affine(&layer.weight, &layer.bias, &activation);
        if i + 1 < theta.layers.len() {
            activation = map_sigmoid(pre);
            hidden.push(activation.clone());
        } else {
            if pre.len() != 1 {
                return Err(ModelError::DimensionMismatch {
                    what: "target output",
                    expected: 1,
                    found: pre.len(),
                });
            }
            return Ok((pre[0], hidden));
        }
    }
    unreachable!("loop returns on the final layer")
}

#[derive(Debug, Clone)]
struct SceneHead {
    w_scene: Range<usize>,
    b_scene: Range<usize>,
    table_mult: Range<usize>,
    table_off: Range<usize>,
}

#[derive(Debug, Clone)]
struct BranchRanges {
    weight_w: Range<usize>,
    weight_b: Range<usize>,
    bias_w: Range<usize>,
    bias_b: Range<usize>,
}

#[derive(Debug, Clone)]
struct HyperLayout {
    w1: Range<usize>,
    b1: Range<usize>,
    w_sem: Range<usize>,
    b_sem: Range<usize>,
    w_con: Range<usize>,
    b_con: Range<usize>,
    trunk: Vec<(Range<usize>, Range<usize>)>,
    branches: Vec<BranchRanges>,
    scene_head: Option<SceneHead>,
}

/// One model covering the plain, argmax-rescaled and probability-rescaled
/// variants; the rescale mode is chosen by the wrapper.
#[derive(Debug, Clone)]
pub struct HyperModel {
    config: HyperConfig,
    scenes: Vec<String>,
    layout: HyperLayout,
    params: Vec<f64>,
}

impl HyperModel {
    pub(crate) fn new<R: rand::Rng>(
        config: HyperConfig,
        scenes: Vec<String>,
        scened: bool,
        rng: &mut R,
    ) -> Self {
        let mut lb = LayoutBuilder::default();
        let c = &config;
        let w1 = lb.range(c.backbone_hidden * c.feature_dim);
        let b1 = lb.range(c.backbone_hidden);
        let w_sem = lb.range(c.semantic_dim * c.backbone_hidden);
        let b_sem = lb.range(c.semantic_dim);
        let w_con = lb.range(c.content_dim * c.backbone_hidden);
        let b_con = lb.range(c.content_dim);

        let mut trunk = Vec::with_capacity(3);
        let mut trunk_in = c.semantic_dim;
        for _ in 0..3 {
            let w = lb.range(c.trunk_dim * trunk_in);
            let b = lb.range(c.trunk_dim);
            trunk.push((w, b));
            trunk_in = c.trunk_dim;
        }

        let mut branches = Vec::with_capacity(4);
        for (out_dim, in_dim) in c.target_shapes() {
            branches.push(BranchRanges {
                weight_w: lb.range(out_dim * in_dim * c.trunk_dim),
                weight_b: lb.range(out_dim * in_dim),
                bias_w: lb.range(out_dim * c.trunk_dim),
                bias_b: lb.range(out_dim),
            });
        }

        let scene_head = scened.then(|| SceneHead {
            w_scene: lb.range(scenes.len() * c.semantic_dim),
            b_scene: lb.range(scenes.len()),
            table_mult: lb.range(scenes.len()),
            table_off: lb.range(scenes.len()),
        });

        let mut params = vec![0.0; lb.total()];
        init_weight(&mut params, w1.clone(), c.feature_dim, rng);
        init_weight(&mut params, w_sem.clone(), c.backbone_hidden, rng);
        init_weight(&mut params, w_con.clone(), c.backbone_hidden, rng);
        let mut fan = c.semantic_dim;
        for (w, _) in &trunk {
            init_weight(&mut params, w.clone(), fan, rng);
            fan = c.trunk_dim;
        }
        for branch in &branches {
            init_weight(&mut params, branch.weight_w.clone(), c.trunk_dim, rng);
            init_weight(&mut params, branch.bias_w.clone(), c.trunk_dim, rng);
        }
        if let Some(head) = &scene_head {
            init_weight(&mut params, head.w_scene.clone(), c.semantic_dim, rng);
            // The table starts as the identity correction.
            for slot in &mut params[head.table_mult.clone()] {
                *slot = 1.0;
            }
        }

        Self {
            config,
            scenes,
            layout: HyperLayout {
                w1,
                b1,
                w_sem,
                b_sem,
                w_con,
                b_con,
                trunk,
                branches,
                scene_head,
            },
            params,
        }
    }

    pub fn config(&self) -> &HyperConfig {
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

    pub(crate) fn backbone_fwd<S: Scalar>(&self, params: &[S], features: &[f64]) -> BackboneOutput<S> {
        let l = &self.layout;
        let x = lift_slice(params[0], features);
        let hidden = map_tanh(affine(&params[l.w1.clone()], &params[l.b1.clone()], &x));
        BackboneOutput {
            semantic: affine(&params[l.w_sem.clone()], &params[l.b_sem.clone()], &hidden),
            content: affine(&params[l.w_con.clone()], &params[l.b_con.clone()], &hidden),
        }
    }

    pub(crate) fn hyper_generate_fwd<S: Scalar>(
        &self,
        params: &[S],
        semantic: &[S],
    ) -> TargetParams<S> {
        let l = &self.layout;
        let mut z = semantic.to_vec();
        for (w, b) in &l.trunk {
            z = map_tanh(affine(&params[w.clone()], &params[b.clone()], &z));
        }
        let layers = self
            .config
            .target_shapes()
            .iter()
            .zip(&l.branches)
            .map(|(&(out_dim, in_dim), branch)| TargetLayer {
                weight: affine(
                    &params[branch.weight_w.clone()],
                    &params[branch.weight_b.clone()],
                    &z,
                ),
                bias: affine(&params[branch.bias_w.clone()], &params[branch.bias_b.clone()], &z),
                out_dim,
                in_dim,
            })
            .collect();
        TargetParams { layers }
    }

    pub(crate) fn scene_logits_fwd<S: Scalar>(
        &self,
        params: &[S],
        semantic: &[S],
    ) -> Result<Vec<S>, ModelError> {
        let head = self.layout.scene_head.as_ref().ok_or(ModelError::NoScenes)?;
        Ok(affine(
            &params[head.w_scene.clone()],
            &params[head.b_scene.clone()],
            semantic,
        ))
    }

    pub(crate) fn forward<S: Scalar>(
        &self,
        params: &[S],
        features: &[f64],
        mode: RescaleMode,
    ) -> Result<S, ModelError> {
        self.check_inputs(params, features)?;
        let out = self.backbone_fwd(params, features);
        let theta = self.hyper_generate_fwd(params, &out.semantic);
        let pre = target_forward(&out.content, &theta)?;
        match mode {
            RescaleMode::None => Ok(pre),
            RescaleMode::ArgmaxScene | RescaleMode::ProbWeighted => {
                let head = self.layout.scene_head.as_ref().ok_or(ModelError::NoScenes)?;
                let probs = softmax(&self.scene_logits_fwd(params, &out.semantic)?);
                let mult = &params[head.table_mult.clone()];
                let off = &params[head.table_off.clone()];
                if mode == RescaleMode::ArgmaxScene {
                    sem_rescale(pre, &probs, mult, off)
                } else {
                    fhiqa_rescale(pre, &probs, mult, off)
                }
            }
        }
    }

    /// Semantic/content extraction on plain floats.
    pub fn backbone(&self, features: &[f64]) -> Result<BackboneOutput<f64>, ModelError> {
        self.check_inputs(&self.params, features)?;
        Ok(self.backbone_fwd(self.params.as_slice(), features))
    }

    /// Generate target-network parameters from a semantic vector.
    pub fn generate_target_params(&self, semantic: &[f64]) -> Result<TargetParams<f64>, ModelError> {
        if semantic.len() != self.config.semantic_dim {
            return Err(ModelError::DimensionMismatch {
                what: "semantic vector",
                expected: self.config.semantic_dim,
                found: semantic.len(),
            });
        }
        Ok(self.hyper_generate_fwd(self.params.as_slice(), semantic))
    }

    /// Scene classification of a feature vector (scene variants only).
    pub fn scene_probs(&self, features: &[f64]) -> Result<SceneProbs, ModelError> {
        self.check_inputs(&self.params, features)?;
        let out = self.backbone_fwd(self.params.as_slice(), features);
        let logits = self.scene_logits_fwd(self.params.as_slice(), &out.semantic)?;
        SceneProbs::new(softmax(&logits))
    }

    /// The current learnable scene table (scene variants only).
    pub fn scene_table(&self) -> Option<SceneScaleTable> {
        let head = self.layout.scene_head.as_ref()?;
        Some(SceneScaleTable {
            multipliers: self.params[head.table_mult.clone()].to_vec(),
            offsets: self.params[head.table_off.clone()].to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn model(scened: bool) -> HyperModel {
        let scenes = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        HyperModel::new(
            HyperConfig::toy(16),
            scenes,
            scened,
            &mut rng::stream(3, "test/hyper"),
        )
    }

    #[test]
    fn generated_shapes_follow_config() {
        let config = HyperConfig {
            feature_dim: 16,
            backbone_hidden: 24,
            semantic_dim: 12,
            content_dim: 8,
            trunk_dim: 12,
            target_hidden: [6, 4, 2],
        };
        let m = HyperModel::new(config, vec![], false, &mut rng::stream(0, "t"));
        let semantic = vec![0.1; 12];
        let theta = m.generate_target_params(&semantic).unwrap();
        let shapes: Vec<(usize, usize)> =
            theta.layers.iter().map(|l| (l.out_dim, l.in_dim)).collect();
        assert_eq!(shapes, vec![(6, 8), (4, 6), (2, 4), (1, 2)]);
        for layer in &theta.layers {
            assert_eq!(layer.weight.len(), layer.out_dim * layer.in_dim);
            assert_eq!(layer.bias.len(), layer.out_dim);
        }
    }

    #[test]
    fn generated_params_compose_with_target_forward() {
        let m = model(false);
        let out = m.backbone(&[0.2; 16]).unwrap();
        let theta = m.generate_target_params(&out.semantic).unwrap();
        let score = target_forward(&out.content, &theta).unwrap();
        assert!(score.is_finite());
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_semantic() {
        let mut m = model(false);
        // Zero all biases but keep weights: tanh(W*0) = 0 propagates.
        let (b1, b_sem, b_con) = (
            m.layout.b1.clone(),
            m.layout.b_sem.clone(),
            m.layout.b_con.clone(),
        );
        for r in [b1, b_sem, b_con] {
            for slot in &mut m.params[r] {
                *slot = 0.0;
            }
        }
        let out = m.backbone(&[0.0; 16]).unwrap();
        assert!(out.semantic.iter().all(|&v| v == 0.0));
        assert!(out.content.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backbone_is_deterministic() {
        let m = model(false);
        let features: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let a = m.backbone(&features).unwrap();
        let b = m.backbone(&features).unwrap();
        assert_eq!(a.semantic, b.semantic);
        assert_eq!(a.content, b.content);
    }

    #[test]
    fn distinct_semantics_generate_distinct_params() {
        let m = model(false);
        let t1 = m.generate_target_params(&[0.5; 12]).unwrap();
        let t2 = m.generate_target_params(&[-0.5; 12]).unwrap();
        let norm_gap: f64 = t1
            .layers
            .iter()
            .zip(&t2.layers)
            .map(|(a, b)| {
                a.weight
                    .iter()
                    .zip(&b.weight)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
            })
            .sum();
        assert!(norm_gap > 0.0);
    }

    #[test]
    fn all_zero_theta_scores_zero() {
        let shapes = [(6, 8), (4, 6), (2, 4), (1, 2)];
        let layers = shapes
            .iter()
            .map(|&(out_dim, in_dim)| TargetLayer {
                weight: vec![0.0; out_dim * in_dim],
                bias: vec![0.0; out_dim],
                out_dim,
                in_dim,
            })
            .collect();
        let theta = TargetParams { layers };
        let score = target_forward(&[1.7; 8], &theta).unwrap();
        assert_eq!(score, 0.0);
    }

    #[test]
    fn zero_weights_give_half_hidden_activations() {
        let shapes = [(6, 8), (4, 6), (2, 4), (1, 2)];
        let layers = shapes
            .iter()
            .map(|&(out_dim, in_dim)| TargetLayer {
                weight: vec![0.0; out_dim * in_dim],
                bias: vec![0.0; out_dim],
                out_dim,
                in_dim,
            })
            .collect();
        let theta = TargetParams { layers };
        let (_, hidden) = target_forward_traced(&[3.0; 8], &theta).unwrap();
        assert_eq!(hidden.len(), 3);
        for layer in hidden {
            assert!(layer.iter().all(|&h| h == 0.5));
        }
    }

    #[test]
    fn target_forward_rejects_mismatched_content() {
        let m = model(false);
        let theta = m.generate_target_params(&[0.0; 12]).unwrap();
        assert!(matches!(
            target_forward(&[0.0; 5], &theta),
            Err(ModelError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn scene_probs_form_a_simplex() {
        let m = model(true);
        let probs = m.scene_probs(&[0.3; 16]).unwrap();
        assert_eq!(probs.len(), 3);
        let sum: f64 = probs.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let mut m = model(true);
        // Zero the classifier weights so logits are the (zero) biases.
        let head = m.layout.scene_head.clone().unwrap();
        for slot in &mut m.params[head.w_scene] {
            *slot = 0.0;
        }
        let probs = m.scene_probs(&[0.5; 16]).unwrap();
        for &p in probs.values() {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_logits_concentrate() {
        let logits = [1000.0, 0.0, 0.0];
        let probs = super::super::linalg::softmax(&logits[..]);
        assert!(probs[0] > 0.999_999);
    }

    #[test]
    fn identity_table_makes_rescale_modes_agree_with_plain() {
        let m = model(true);
        let features = vec![0.4; 16];
        // The freshly initialized table is the identity.
        let plain = m
            .forward(m.params(), &features, RescaleMode::None)
            .unwrap();
        let sem = m
            .forward(m.params(), &features, RescaleMode::ArgmaxScene)
            .unwrap();
        let fhiqa = m
            .forward(m.params(), &features, RescaleMode::ProbWeighted)
            .unwrap();
        assert_eq!(plain, sem);
        assert!((plain - fhiqa).abs() < 1e-12);
    }
}
