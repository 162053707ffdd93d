//! Mean-opinion scoring with multi-view attention blocks.
//!
//! Several identically shaped attention blocks, initialized differently,
//! each produce an "opinion feature" from the same stack of basic
//! features; an aggregation block fuses the opinions into one vector that
//! feeds a scalar score head and a scene classification head.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::linalg::{affine, lift_slice, map_tanh, softmax};
use super::rescale::SceneProbs;
use super::{init_weight, LayoutBuilder, ModelError};
use crate::autodiff::Scalar;

/// Dimensions of the opinion model: `levels` basic features, each a
/// `tokens x token_dim` matrix, processed by `mals` opinion blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonetConfig {
    pub feature_dim: usize,
    pub tokens: usize,
    pub token_dim: usize,
    pub levels: usize,
    pub mals: usize,
    pub reduce_hidden: usize,
}

impl MonetConfig {
    pub fn toy(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            tokens: 4,
            token_dim: 4,
            levels: 2,
            mals: 2,
            reduce_hidden: 8,
        }
    }

    /// Length of one opinion feature: token_dim * levels.
    pub fn opinion_dim(&self) -> usize {
        self.token_dim * self.levels
    }
}

#[derive(Debug, Clone)]
struct SaRanges {
    wq: Range<usize>,
    wk: Range<usize>,
    wv: Range<usize>,
}

fn sa_ranges(lb: &mut LayoutBuilder, dim: usize) -> SaRanges {
    SaRanges {
        wq: lb.range(dim * dim),
        wk: lb.range(dim * dim),
        wv: lb.range(dim * dim),
    }
}

/// Residual single-head scaled dot-product self-attention over a
/// `tokens x dim` matrix: `X + softmax(XWq (XWk)^T / sqrt(dim)) X Wv`.
/// With all-zero parameters it is exactly the identity.
fn self_attention<S: Scalar>(
    x: &[S],
    tokens: usize,
    dim: usize,
    wq: &[S],
    wk: &[S],
    wv: &[S],
) -> Vec<S> {
    debug_assert_eq!(x.len(), tokens * dim);
    let project = |w: &[S]| -> Vec<S> {
        let mut out = Vec::with_capacity(tokens * dim);
        for t in 0..tokens {
            for j in 0..dim {
                let mut acc = w[j] * x[t * dim];
                for k in 1..dim {
                    acc = acc + w[k * dim + j] * x[t * dim + k];
                }
                out.push(acc);
            }
        }
        out
    };
    let q = project(wq);
    let k = project(wk);
    let scale = 1.0 / (dim as f64).sqrt();

    let mut out = x.to_vec();
    let mut row_scores = Vec::with_capacity(tokens);
    for i in 0..tokens {
        row_scores.clear();
        for j in 0..tokens {
            let mut dot = q[i * dim] * k[j * dim];
            for c in 1..dim {
                dot = dot + q[i * dim + c] * k[j * dim + c];
            }
            row_scores.push(dot * dot.lift(scale));
        }
        let attn = softmax(&row_scores);
        // context_i = sum_j attn_j * x_j, then out_i += context_i * Wv
        let mut context = Vec::with_capacity(dim);
        for c in 0..dim {
            let mut acc = attn[0] * x[c];
            for (j, &a) in attn.iter().enumerate().skip(1) {
                acc = acc + a * x[j * dim + c];
            }
            context.push(acc);
        }
        for j in 0..dim {
            let mut acc = context[0] * wv[j];
            for c in 1..dim {
                acc = acc + context[c] * wv[c * dim + j];
            }
            out[i * dim + j] = out[i * dim + j] + acc;
        }
    }
    out
}

/// Index maps between the stacked `tokens x (dim * levels)` view and the
/// channel view `dim x (tokens * levels)`.
pub(crate) fn to_channel_view<S: Copy>(
    stacked: &[S],
    tokens: usize,
    dim: usize,
    levels: usize,
) -> Vec<S> {
    let mut out = Vec::with_capacity(stacked.len());
    for d in 0..dim {
        for level in 0..levels {
            for t in 0..tokens {
                out.push(stacked[t * (dim * levels) + level * dim + d]);
            }
        }
    }
    out
}

pub(crate) fn from_channel_view<S: Copy>(
    channel: &[S],
    tokens: usize,
    dim: usize,
    levels: usize,
) -> Vec<S> {
    let mut out = Vec::with_capacity(channel.len());
    for t in 0..tokens {
        for level in 0..levels {
            for d in 0..dim {
                out.push(channel[d * (tokens * levels) + level * tokens + t]);
            }
        }
    }
    out
}

/// One multi-view attention block: per-level self-attentions, then a
/// spatial branch and a channel branch (after the stated reshape/permute)
/// whose outputs are added and average-pooled over tokens.
#[derive(Debug, Clone)]
pub struct MalBlock {
    tokens: usize,
    dim: usize,
    levels: usize,
    level_sa: Vec<SaRanges>,
    spatial_sa: SaRanges,
    channel_sa: SaRanges,
    param_len: usize,
}

impl MalBlock {
    pub fn new(tokens: usize, dim: usize, levels: usize) -> Self {
        let mut lb = LayoutBuilder::default();
        let level_sa = (0..levels).map(|_| sa_ranges(&mut lb, dim)).collect();
        let spatial_sa = sa_ranges(&mut lb, dim * levels);
        let channel_sa = sa_ranges(&mut lb, tokens * levels);
        Self {
            tokens,
            dim,
            levels,
            level_sa,
            spatial_sa,
            channel_sa,
            param_len: lb.total(),
        }
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    /// Output length: dim * levels.
    pub fn opinion_dim(&self) -> usize {
        self.dim * self.levels
    }

    pub(crate) fn init<R: rand::Rng>(&self, params: &mut [f64], rng: &mut R) {
        debug_assert_eq!(params.len(), self.param_len);
        let fans = self
            .level_sa
            .iter()
            .map(|sa| (sa, self.dim))
            .chain([
                (&self.spatial_sa, self.dim * self.levels),
                (&self.channel_sa, self.tokens * self.levels),
            ]);
        for (sa, fan) in fans {
            init_weight(params, sa.wq.clone(), fan, rng);
            init_weight(params, sa.wk.clone(), fan, rng);
            init_weight(params, sa.wv.clone(), fan, rng);
        }
    }

    /// Freshly initialized parameters for a standalone block.
    pub fn init_params<R: rand::Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_len];
        self.init(&mut params, rng);
        params
    }

    fn check_inputs<S>(&self, params: &[S], inputs: &[Vec<S>]) -> Result<(), ModelError> {
        if params.len() != self.param_len {
            return Err(ModelError::DimensionMismatch {
                what: "MAL parameters",
                expected: self.param_len,
                found: params.len(),
            });
        }
        if inputs.len() != self.levels {
            return Err(ModelError::DimensionMismatch {
                what: "MAL input count",
                expected: self.levels,
                found: inputs.len(),
            });
        }
        for input in inputs {
            if input.len() != self.tokens * self.dim {
                return Err(ModelError::DimensionMismatch {
                    what: "MAL input shape",
                    expected: self.tokens * self.dim,
                    found: input.len(),
                });
            }
        }
        Ok(())
    }

    /// The channel branch on an already-stacked `tokens x (dim * levels)`
    /// matrix: permute, attend, permute back.
    pub(crate) fn channel_branch<S: Scalar>(&self, params: &[S], stacked: &[S]) -> Vec<S> {
        let view = to_channel_view(stacked, self.tokens, self.dim, self.levels);
        let attended = self_attention(
            &view,
            self.dim,
            self.tokens * self.levels,
            &params[self.channel_sa.wq.clone()],
            &params[self.channel_sa.wk.clone()],
            &params[self.channel_sa.wv.clone()],
        );
        from_channel_view(&attended, self.tokens, self.dim, self.levels)
    }

    /// Produce one opinion feature of length `dim * levels`.
    pub fn forward<S: Scalar>(&self, params: &[S], inputs: &[Vec<S>]) -> Result<Vec<S>, ModelError> {
        self.check_inputs(params, inputs)?;
        // Per-level self-attentions, stacked into tokens x (dim * levels).
        let wide = self.dim * self.levels;
        let mut stacked = Vec::with_capacity(self.tokens * wide);
        let attended: Vec<Vec<S>> = inputs
            .iter()
            .zip(&self.level_sa)
            .map(|(input, sa)| {
                self_attention(
                    input,
                    self.tokens,
                    self.dim,
                    &params[sa.wq.clone()],
                    &params[sa.wk.clone()],
                    &params[sa.wv.clone()],
                )
            })
            .collect();
        for t in 0..self.tokens {
            for level_out in &attended {
                stacked.extend_from_slice(&level_out[t * self.dim..(t + 1) * self.dim]);
            }
        }

        let spatial = self_attention(
            &stacked,
            self.tokens,
            wide,
            &params[self.spatial_sa.wq.clone()],
            &params[self.spatial_sa.wk.clone()],
            &params[self.spatial_sa.wv.clone()],
        );
        let channel = self.channel_branch(params, &stacked);

        // Add branches, average-pool over tokens.
        let inv_tokens = 1.0 / self.tokens as f64;
        let mut pooled = Vec::with_capacity(wide);
        for c in 0..wide {
            let mut acc = spatial[c] + channel[c];
            for t in 1..self.tokens {
                acc = acc + spatial[t * wide + c] + channel[t * wide + c];
            }
            pooled.push(acc * acc.lift(inv_tokens));
        }
        Ok(pooled)
    }
}

#[derive(Debug, Clone)]
struct MonetLayout {
    level_maps: Vec<(Range<usize>, Range<usize>)>,
    mal_params: Vec<Range<usize>>,
    agg_params: Range<usize>,
    reduce_w1: Range<usize>,
    reduce_b1: Range<usize>,
    reduce_w2: Range<usize>,
    reduce_b2: Range<usize>,
    scene_w: Range<usize>,
    scene_b: Range<usize>,
}

/// The full opinion model.
#[derive(Debug, Clone)]
pub struct MonetModel {
    config: MonetConfig,
    scenes: Vec<String>,
    mal: MalBlock,
    agg: MalBlock,
    layout: MonetLayout,
    params: Vec<f64>,
}

impl MonetModel {
    pub(crate) fn new<R: rand::Rng>(config: MonetConfig, scenes: Vec<String>, rng: &mut R) -> Self {
        let token_len = config.tokens * config.token_dim;
        let d_op = config.opinion_dim();
        let mal = MalBlock::new(config.tokens, config.token_dim, config.levels);
        let agg = MalBlock::new(config.mals, d_op, 1);

        let mut lb = LayoutBuilder::default();
        let level_maps: Vec<(Range<usize>, Range<usize>)> = (0..config.levels)
            .map(|_| (lb.range(token_len * config.feature_dim), lb.range(token_len)))
            .collect();
        let mal_params: Vec<Range<usize>> =
            (0..config.mals).map(|_| lb.range(mal.param_len())).collect();
        let agg_params = lb.range(agg.param_len());
        let reduce_w1 = lb.range(config.reduce_hidden * d_op);
        let reduce_b1 = lb.range(config.reduce_hidden);
        let reduce_w2 = lb.range(config.reduce_hidden);
        let reduce_b2 = lb.range(1);
        let scene_w = lb.range(scenes.len() * d_op);
        let scene_b = lb.range(scenes.len());

        let mut params = vec![0.0; lb.total()];
        for (w, _) in &level_maps {
            init_weight(&mut params, w.clone(), config.feature_dim, rng);
        }
        for range in &mal_params {
            mal.init(&mut params[range.clone()], rng);
        }
        agg.init(&mut params[agg_params.clone()], rng);
        init_weight(&mut params, reduce_w1.clone(), d_op, rng);
        init_weight(&mut params, reduce_w2.clone(), config.reduce_hidden, rng);
        init_weight(&mut params, scene_w.clone(), d_op, rng);

        Self {
            config,
            scenes,
            mal,
            agg,
            layout: MonetLayout {
                level_maps,
                mal_params,
                agg_params,
                reduce_w1,
                reduce_b1,
                reduce_w2,
                reduce_b2,
                scene_w,
                scene_b,
            },
            params,
        }
    }

    pub fn config(&self) -> &MonetConfig {
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

    /// Basic features for each level: a tanh-bounded linear map of the
    /// input feature vector, shaped `tokens x token_dim`.
    fn level_features<S: Scalar>(&self, params: &[S], features: &[f64]) -> Vec<Vec<S>> {
        let x = lift_slice(params[0], features);
        self.layout
            .level_maps
            .iter()
            .map(|(w, b)| map_tanh(affine(&params[w.clone()], &params[b.clone()], &x)))
            .collect()
    }

    fn opinions<S: Scalar>(
        &self,
        params: &[S],
        level_feats: &[Vec<S>],
    ) -> Result<Vec<Vec<S>>, ModelError> {
        self.layout
            .mal_params
            .iter()
            .map(|range| self.mal.forward(&params[range.clone()], level_feats))
            .collect()
    }

    fn aggregate<S: Scalar>(
        &self,
        params: &[S],
        opinions: &[Vec<S>],
    ) -> Result<(S, Vec<S>), ModelError> {
        if opinions.len() != self.config.mals {
            return Err(ModelError::WrongOpinionCount {
                expected: self.config.mals,
                found: opinions.len(),
            });
        }
        let d_op = self.config.opinion_dim();
        for opinion in opinions {
            if opinion.len() != d_op {
                return Err(ModelError::DimensionMismatch {
                    what: "opinion feature",
                    expected: d_op,
                    found: opinion.len(),
                });
            }
        }
        // Opinions become the tokens of the aggregation block.
        let mut stacked = Vec::with_capacity(self.config.mals * d_op);
        for opinion in opinions {
            stacked.extend_from_slice(opinion);
        }
        let fused = self
            .agg
            .forward(&params[self.layout.agg_params.clone()], &[stacked])?;

        let l = &self.layout;
        let hidden = map_tanh(affine(
            &params[l.reduce_w1.clone()],
            &params[l.reduce_b1.clone()],
            &fused,
        ));
        let score = affine(&params[l.reduce_w2.clone()], &params[l.reduce_b2.clone()], &hidden)[0];
        let probs = softmax(&affine(
            &params[l.scene_w.clone()],
            &params[l.scene_b.clone()],
            &fused,
        ));
        Ok((score, probs))
    }

    pub(crate) fn score_and_probs_fwd<S: Scalar>(
        &self,
        params: &[S],
        features: &[f64],
    ) -> Result<(S, Vec<S>), ModelError> {
        self.check_inputs(params, features)?;
        let level_feats = self.level_features(params, features);
        let opinions = self.opinions(params, &level_feats)?;
        self.aggregate(params, &opinions)
    }

    pub(crate) fn forward<S: Scalar>(&self, params: &[S], features: &[f64]) -> Result<S, ModelError> {
        self.score_and_probs_fwd(params, features).map(|(s, _)| s)
    }

    /// Score plus scene probabilities on plain floats.
    pub fn score_and_probs(
        &self,
        params: &[f64],
        features: &[f64],
    ) -> Result<(f64, SceneProbs), ModelError> {
        let (score, probs) = self.score_and_probs_fwd(params, features)?;
        Ok((score, SceneProbs::new(probs)?))
    }

    /// One opinion feature from the configured block index.
    pub fn opinion(&self, mal_index: usize, features: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_inputs(self.params.as_slice(), features)?;
        let range = self
            .layout
            .mal_params
            .get(mal_index)
            .ok_or(ModelError::DimensionMismatch {
                what: "MAL index",
                expected: self.config.mals,
                found: mal_index,
            })?
            .clone();
        let level_feats = self.level_features(self.params.as_slice(), features);
        self.mal.forward(&self.params[range], &level_feats)
    }

    /// Fuse externally supplied opinion features into a score and scene
    /// probabilities.
    pub fn aggregate_opinions(
        &self,
        opinions: &[Vec<f64>],
    ) -> Result<(f64, SceneProbs), ModelError> {
        let (score, probs) = self.aggregate(self.params.as_slice(), opinions)?;
        Ok((score, SceneProbs::new(probs)?))
    }
}
