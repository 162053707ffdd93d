//! Scene-conditioned affine rescaling of pre-quality scores.
//!
//! Two flavours share one table of per-scene `(multiplier, offset)` pairs:
//! argmax-scene selection applies a single pair, probability weighting
//! blends all of them. One-hot probabilities make the two coincide.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autodiff::Scalar;

/// A probability vector over training scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneProbs(Vec<f64>);

impl SceneProbs {
    /// Validate simplex membership: non-negative entries summing to 1
    /// within 1e-6.
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::BadProbs("empty probability vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::BadProbs(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ModelError::BadProbs(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// A one-hot vector with mass on `index`.
    pub fn one_hot(index: usize, len: usize) -> Result<Self, ModelError> {
        if index >= len {
            return Err(ModelError::UnknownScene {
                index,
                n_scenes: len,
            });
        }
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Ok(Self(probs))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties break to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax_by_value(&self.0)
    }
}

pub(crate) fn argmax_by_value<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if v.value() > values[best].value() {
            best = i;
        }
    }
    best
}

/// Learnable per-scene multiplier/offset pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScaleTable {
    pub multipliers: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl SceneScaleTable {
    /// The identity table (multiplier 1, offset 0 everywhere).
    pub fn identity(n_scenes: usize) -> Self {
        Self {
            multipliers: vec![1.0; n_scenes],
            offsets: vec![0.0; n_scenes],
        }
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }

    /// Argmax-scene rescaling with this table.
    pub fn rescale_argmax(&self, pre_score: f64, probs: &SceneProbs) -> Result<f64, ModelError> {
        sem_rescale(pre_score, probs.values(), &self.multipliers, &self.offsets)
    }

    /// Probability-weighted rescaling with this table.
    pub fn rescale_weighted(&self, pre_score: f64, probs: &SceneProbs) -> Result<f64, ModelError> {
        fhiqa_rescale(pre_score, probs.values(), &self.multipliers, &self.offsets)
    }
}

fn check_table<S: Scalar>(
    probs: &[S],
    multipliers: &[S],
    offsets: &[S],
) -> Result<(), ModelError> {
    if multipliers.is_empty() || offsets.is_empty() {
        return Err(ModelError::EmptyTable);
    }
    if multipliers.len() != probs.len() || offsets.len() != probs.len() {
        return Err(ModelError::TableMismatch {
            probs: probs.len(),
            table: multipliers.len().min(offsets.len()),
        });
    }
    Ok(())
}

/// Apply the argmax scene's multiplier and offset:
/// `q = m_k * pre_score + o_k`, `k = argmax(probs)`, ties to lowest index.
pub fn sem_rescale<S: Scalar>(
    pre_score: S,
    probs: &[S],
    multipliers: &[S],
    offsets: &[S],
) -> Result<S, ModelError> {
    check_table(probs, multipliers, offsets)?;
    let k = argmax_by_value(probs);
    Ok(multipliers[k] * pre_score + offsets[k])
}

/// Blend all scene corrections by the probability vector:
/// `q = sum_k w_k * (m_k * pre_score + o_k)`.
pub fn fhiqa_rescale<S: Scalar>(
    pre_score: S,
    probs: &[S],
    multipliers: &[S],
    offsets: &[S],
) -> Result<S, ModelError> {
    check_table(probs, multipliers, offsets)?;
    let mut acc: Option<S> = None;
    for ((&w, &m), &o) in probs.iter().zip(multipliers).zip(offsets) {
        let term = w * (m * pre_score + o);
        acc = Some(match acc {
            Some(a) => a + term,
            None => term,
        });
    }
    Ok(acc.expect("non-empty table"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_table_is_identity() {
        let table = SceneScaleTable::identity(3);
        let probs = SceneProbs::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(table.rescale_argmax(2.5, &probs).unwrap(), 2.5);
        assert_eq!(table.rescale_weighted(2.5, &probs).unwrap(), 2.5);
    }

    #[test]
    fn sem_applies_argmax_scene_pair() {
        let probs = SceneProbs::one_hot(2, 4).unwrap();
        let table = SceneScaleTable {
            multipliers: vec![1.0, 1.0, 2.0, 1.0],
            offsets: vec![0.0, 0.0, -1.0, 0.0],
        };
        assert_eq!(table.rescale_argmax(3.0, &probs).unwrap(), 5.0);
    }

    #[test]
    fn sem_argmax_tie_breaks_to_lowest_index() {
        let probs = SceneProbs::new(vec![0.5, 0.5]).unwrap();
        let table = SceneScaleTable {
            multipliers: vec![10.0, 20.0],
            offsets: vec![0.0, 0.0],
        };
        assert_eq!(table.rescale_argmax(1.0, &probs).unwrap(), 10.0);
        assert_eq!(probs.argmax(), 0);
    }

    #[test]
    fn fhiqa_uniform_blend_hand_computed() {
        let probs = SceneProbs::new(vec![0.5, 0.5]).unwrap();
        let table = SceneScaleTable {
            multipliers: vec![1.0, 3.0],
            offsets: vec![1.0, -1.0],
        };
        // (1*2+1)/2 + (3*2-1)/2 = (3 + 5)/2 = 4
        assert_eq!(table.rescale_weighted(2.0, &probs).unwrap(), 4.0);
    }

    #[test]
    fn fhiqa_one_hot_reduces_to_sem() {
        let table = SceneScaleTable {
            multipliers: vec![0.3, -1.5, 4.0],
            offsets: vec![2.0, 0.25, -3.5],
        };
        for k in 0..3 {
            let probs = SceneProbs::one_hot(k, 3).unwrap();
            let sem = table.rescale_argmax(1.75, &probs).unwrap();
            let fhiqa = table.rescale_weighted(1.75, &probs).unwrap();
            assert_eq!(sem, fhiqa, "scene {k}");
        }
    }

    #[test]
    fn fhiqa_linear_in_pre_score() {
        let probs = vec![0.25, 0.75];
        let mult = vec![2.0, 4.0];
        let off = vec![1.0, -1.0];
        let slope: f64 = probs.iter().zip(&mult).map(|(w, m)| w * m).sum();
        let at0 = fhiqa_rescale(0.0, &probs, &mult, &off).unwrap();
        for pre in [-2.0, 0.5, 3.0] {
            let q = fhiqa_rescale(pre, &probs, &mult, &off).unwrap();
            assert!((q - (slope * pre + at0)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_and_mismatched_tables() {
        assert!(matches!(
            sem_rescale(1.0, &[1.0], &[], &[]),
            Err(ModelError::EmptyTable)
        ));
        assert!(matches!(
            fhiqa_rescale(1.0, &[0.5, 0.5], &[1.0], &[0.0]),
            Err(ModelError::TableMismatch { .. })
        ));
    }

    #[test]
    fn scene_probs_validation() {
        assert!(SceneProbs::new(vec![0.5, 0.6]).is_err());
        assert!(SceneProbs::new(vec![-0.1, 1.1]).is_err());
        assert!(SceneProbs::new(vec![]).is_err());
        assert!(SceneProbs::new(vec![0.5, 0.5]).is_ok());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn one_hot_reduction_holds_for_random_tables(
                table in proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 1..8),
                pre in -10.0..10.0f64,
                pick in proptest::num::usize::ANY,
            ) {
                let mult: Vec<f64> = table.iter().map(|t| t.0).collect();
                let off: Vec<f64> = table.iter().map(|t| t.1).collect();
                let k = pick % mult.len();
                let probs = SceneProbs::one_hot(k, mult.len()).unwrap();
                let sem = sem_rescale(pre, probs.values(), &mult, &off).unwrap();
                let fhiqa = fhiqa_rescale(pre, probs.values(), &mult, &off).unwrap();
                prop_assert_eq!(sem, fhiqa);
            }
        }
    }
}
