//! Training objectives over per-scene score vectors.
//!
//! All losses are written generically over [`Scalar`], so the same code
//! evaluates plainly on `f64` and records gradients on the tape. Scores
//! are only ever combined within one scene; callers provide the grouping.

use thiserror::Error;

use crate::autodiff::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("score vector needs at least {need} values, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("prediction and ground truth lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("paired loss needs an even number of values, got {0}")]
    OddLength(usize),
    #[error("scene group {index} has fewer than 2 values")]
    SmallGroup { index: usize },
    #[error("no scene groups supplied")]
    NoGroups,
    #[error("patch loss needs at least one patch prediction")]
    NoPatches,
    #[error("huber delta must be positive, got {0}")]
    BadDelta(f64),
}

/// Default Huber transition point.
pub const DEFAULT_HUBER_DELTA: f64 = 0.2;

/// Scores mapped to the zero-shift, unit-scale relative quality space.
///
/// When the input is constant the scale is zero and the mapped values are
/// all zeros rather than a division by zero.
#[derive(Debug, Clone)]
pub struct NormalizedScores<S> {
    pub values: Vec<S>,
    pub shift: S,
    pub scale: S,
}

impl<S: Scalar> NormalizedScores<S> {
    pub fn is_degenerate(&self) -> bool {
        self.scale.value() == 0.0
    }
}

/// Median with the even case averaged over the two middle order statistics.
fn median<S: Scalar>(values: &[S]) -> S {
    debug_assert!(!values.is_empty());
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].value().total_cmp(&values[b].value()));
    let n = values.len();
    if n % 2 == 1 {
        values[order[n / 2]]
    } else {
        let lo = values[order[n / 2 - 1]];
        let hi = values[order[n / 2]];
        (lo + hi) * lo.lift(0.5)
    }
}

/// Map scores into relative quality space: subtract the median, divide by
/// the mean absolute deviation from it.
pub fn relative_map<S: Scalar>(scores: &[S]) -> Result<NormalizedScores<S>, LossError> {
    if scores.len() < 2 {
        return Err(LossError::TooShort {
            need: 2,
            got: scores.len(),
        });
    }
    let shift = median(scores);
    let deviations: Vec<S> = scores.iter().map(|&q| q - shift).collect();
    let n_inv = 1.0 / scores.len() as f64;
    let mut scale = deviations[0].abs();
    for d in &deviations[1..] {
        scale = scale + d.abs();
    }
    scale = scale * shift.lift(n_inv);
    let values = if scale.value() == 0.0 {
        deviations.iter().map(|d| d.lift(0.0)).collect()
    } else {
        deviations.iter().map(|&d| d / scale).collect()
    };
    Ok(NormalizedScores {
        values,
        shift,
        scale,
    })
}

/// Scale-shift invariant loss over scene groups: both sides are mapped to
/// relative quality space per scene, then the mean absolute deviation is
/// taken over every entry.
pub fn ssi_loss<S: Scalar>(pred: &[Vec<S>], gt: &[Vec<S>]) -> Result<S, LossError> {
    if pred.is_empty() {
        return Err(LossError::NoGroups);
    }
    if pred.len() != gt.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let mut total: Option<S> = None;
    let mut count = 0usize;
    for (index, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.len() < 2 || g.len() < 2 {
            return Err(LossError::SmallGroup { index });
        }
        if p.len() != g.len() {
            return Err(LossError::LengthMismatch {
                pred: p.len(),
                gt: g.len(),
            });
        }
        let p_hat = relative_map(p)?;
        let g_hat = relative_map(g)?;
        for (&a, &b) in p_hat.values.iter().zip(&g_hat.values) {
            let term = (a - b).abs();
            total = Some(match total {
                Some(t) => t + term,
                None => term,
            });
            count += 1;
        }
    }
    let total = total.expect("at least one group");
    Ok(total * total.lift(1.0 / count as f64))
}

/// Merged ranking loss over consecutive pairs `(i, i+1)`: an exponential
/// rank penalty when the ground truth says the second element is better,
/// plus the squared regression error on the pair's first element.
pub fn merged_rank_loss<S: Scalar>(pred: &[S], gt: &[S]) -> Result<S, LossError> {
    if pred.len() != gt.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() || !pred.len().is_multiple_of(2) {
        return Err(LossError::OddLength(pred.len()));
    }
    let mut total: Option<S> = None;
    for k in (0..pred.len()).step_by(2) {
        let sq = {
            let r = gt[k] - pred[k];
            r * r
        };
        let term = if gt[k].value() < gt[k + 1].value() {
            (pred[k] - pred[k + 1]).exp() + sq
        } else {
            sq
        };
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    let total = total.expect("at least one pair");
    Ok(total * total.lift(2.0 / pred.len() as f64))
}

/// Binary preference label for a within-scene pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairLabel {
    first_preferred: bool,
}

impl PairLabel {
    pub fn new(first_preferred: bool) -> Self {
        Self { first_preferred }
    }

    pub fn first_preferred(self) -> bool {
        self.first_preferred
    }

    /// The label as the paper-style {0, 1} value.
    pub fn as_f64(self) -> f64 {
        if self.first_preferred {
            1.0
        } else {
            0.0
        }
    }

    pub fn flipped(self) -> Self {
        Self {
            first_preferred: !self.first_preferred,
        }
    }
}

/// Label a pair from its ground-truth JODs: 1 when the first image is at
/// least as good as the second.
pub fn pair_label(jod_x: f64, jod_y: f64) -> PairLabel {
    PairLabel::new(jod_x >= jod_y)
}

/// Fidelity loss for one pair: the comparison probability is the standard
/// normal CDF of the score difference over sqrt(2), and the loss is
/// `1 - sqrt(p*p_hat) - sqrt((1-p)(1-p_hat))` specialized to binary labels.
///
/// The two branches evaluate structurally mirrored expressions, so
/// swapping the pair together with the label reproduces the loss exactly.
pub fn fidelity_loss<S: Scalar>(pred_x: S, pred_y: S, label: PairLabel) -> S {
    let diff = pred_x - pred_y;
    let signed = if label.first_preferred() { diff } else { -diff };
    let p_hat = (signed * signed.lift(std::f64::consts::FRAC_1_SQRT_2)).normal_cdf();
    // Clamp away exact zero so the sqrt gradient stays finite under
    // saturated wrong-way predictions.
    let p_hat = p_hat.max_const(1e-300);
    signed.lift(1.0) - p_hat.sqrt()
}

/// Penalty shape for [`patch_loss_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PatchPenalty {
    #[default]
    Absolute,
    Squared,
}

/// Patch loss: every patch inherits the source image's score and the
/// deviations are averaged. Absolute deviation by default.
pub fn patch_loss<S: Scalar>(pred_patches: &[S], gt_score: S) -> Result<S, LossError> {
    patch_loss_with(pred_patches, gt_score, PatchPenalty::Absolute)
}

pub fn patch_loss_with<S: Scalar>(
    pred_patches: &[S],
    gt_score: S,
    penalty: PatchPenalty,
) -> Result<S, LossError> {
    if pred_patches.is_empty() {
        return Err(LossError::NoPatches);
    }
    let mut total: Option<S> = None;
    for &p in pred_patches {
        let r = p - gt_score;
        let term = match penalty {
            PatchPenalty::Absolute => r.abs(),
            PatchPenalty::Squared => r * r,
        };
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    let total = total.expect("non-empty patches");
    Ok(total * total.lift(1.0 / pred_patches.len() as f64))
}

/// Elementwise Huber loss averaged over the vector: quadratic within
/// `delta` of the target, linear outside.
pub fn huber_loss<S: Scalar>(pred: &[S], gt: &[S], delta: f64) -> Result<S, LossError> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(LossError::BadDelta(delta));
    }
    if pred.len() != gt.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if pred.is_empty() {
        return Err(LossError::TooShort { need: 1, got: 0 });
    }
    let mut total: Option<S> = None;
    for (&p, &g) in pred.iter().zip(gt) {
        let r = p - g;
        let term = if r.value().abs() <= delta {
            r * r * r.lift(0.5)
        } else {
            (r.abs() - r.lift(0.5 * delta)) * r.lift(delta)
        };
        total = Some(match total {
            Some(t) => t + term,
            None => term,
        });
    }
    let total = total.expect("non-empty vectors");
    Ok(total * total.lift(1.0 / pred.len() as f64))
}
