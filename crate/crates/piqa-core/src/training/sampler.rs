//! Scene-balanced batching and pair/patch sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use super::TrainError;
use crate::data::Manifest;
use crate::rng;

/// Batch shape: `scenes_per_batch` distinct scenes with
/// `samples_per_scene` records each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BatchSpec {
    pub scenes_per_batch: usize,
    pub samples_per_scene: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            scenes_per_batch: 4,
            samples_per_scene: 32,
        }
    }
}

impl BatchSpec {
    pub fn batch_size(&self) -> usize {
        self.scenes_per_batch * self.samples_per_scene
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.scenes_per_batch < 1 {
            return Err(TrainError::BadConfig(
                "scenes_per_batch must be >= 1".to_string(),
            ));
        }
        if self.samples_per_scene < 2 {
            return Err(TrainError::BadConfig(
                "samples_per_scene must be >= 2 (within-scene losses need pairs)".to_string(),
            ));
        }
        Ok(())
    }
}

/// Records of one scene inside a batch, as manifest record indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneGroup {
    pub scene_id: String,
    pub records: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub groups: Vec<SceneGroup>,
}

/// One epoch of scene-balanced batches: scenes are shuffled and chunked
/// so every scene appears at least once, each batch holds exactly
/// `scenes_per_batch` distinct scenes, and each selected scene
/// contributes `samples_per_scene` records (shuffled without replacement,
/// topping up with replacement when the scene is smaller than that).
pub fn scene_balanced_batches(
    manifest: &Manifest,
    spec: &BatchSpec,
    seed: u64,
) -> Result<Vec<Batch>, TrainError> {
    spec.validate()?;
    let scene_ids: Vec<&str> = manifest.scene_ids();
    if scene_ids.len() < spec.scenes_per_batch {
        return Err(TrainError::TooFewScenes {
            found: scene_ids.len(),
            need: spec.scenes_per_batch,
        });
    }
    let mut rng = rng::stream(seed, "scene-balanced-batches");
    let mut order: Vec<usize> = (0..scene_ids.len()).collect();
    order.shuffle(&mut rng);

    let mut batches = Vec::new();
    for chunk in order.chunks(spec.scenes_per_batch) {
        let mut scene_indices = chunk.to_vec();
        if scene_indices.len() < spec.scenes_per_batch {
            // Top up the final partial chunk with other scenes, keeping
            // the batch's scenes distinct.
            let mut extras: Vec<usize> = (0..scene_ids.len())
                .filter(|i| !scene_indices.contains(i))
                .collect();
            extras.shuffle(&mut rng);
            scene_indices.extend(extras.into_iter().take(spec.scenes_per_batch - scene_indices.len()));
        }
        let mut groups = Vec::with_capacity(spec.scenes_per_batch);
        for &scene_idx in &scene_indices {
            let scene_id = scene_ids[scene_idx];
            let members = manifest
                .scene_records(scene_id)
                .expect("scene ids come from the manifest");
            let records = if members.len() >= spec.samples_per_scene {
                let mut pool = members.to_vec();
                pool.shuffle(&mut rng);
                pool.truncate(spec.samples_per_scene);
                pool
            } else {
                (0..spec.samples_per_scene)
                    .map(|_| members[rng.random_range(0..members.len())])
                    .collect()
            };
            groups.push(SceneGroup {
                scene_id: scene_id.to_string(),
                records,
            });
        }
        batches.push(Batch { groups });
    }
    Ok(batches)
}

/// All unordered within-scene pairs, in shuffled order. The caller passes
/// the records of a single scene, so every pair shares that scene.
pub fn sample_pairs<T: Copy, R: Rng>(items: &[T], rng: &mut R) -> Result<Vec<(T, T)>, TrainError> {
    if items.len() < 2 {
        return Err(TrainError::BadConfig(
            "pair sampling needs at least 2 records in the scene".to_string(),
        ));
    }
    let mut pairs = Vec::with_capacity(items.len() * (items.len() - 1) / 2);
    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            pairs.push((items[i], items[j]));
        }
    }
    pairs.shuffle(rng);
    Ok(pairs)
}

/// A crop origin plus its horizontal-flip flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    pub row: usize,
    pub col: usize,
    pub flipped: bool,
}

/// Sample `n` random patch origins of `size x size` within an
/// `src_h x src_w` source, each flipped independently with probability
/// `flip_p`. Patches always lie fully inside the source.
pub fn sample_patch_origins<R: Rng>(
    src_h: usize,
    src_w: usize,
    size: usize,
    n: usize,
    flip_p: f64,
    rng: &mut R,
) -> Result<Vec<PatchOrigin>, TrainError> {
    if n == 0 {
        return Err(TrainError::BadConfig("patch count must be >= 1".to_string()));
    }
    if src_h < size || src_w < size {
        return Err(TrainError::SourceTooSmall {
            src_h,
            src_w,
            size,
        });
    }
    let mut origins = Vec::with_capacity(n);
    for _ in 0..n {
        let row = rng.random_range(0..=src_h - size);
        let col = rng.random_range(0..=src_w - size);
        let flipped = rng.random::<f64>() < flip_p;
        origins.push(PatchOrigin { row, col, flipped });
    }
    Ok(origins)
}

/// Patch views of a feature vector: `n` independently jittered copies,
/// each inheriting the source's score. With `jitter_sd` 0 every view is
/// the source itself.
pub fn sample_patch_views<R: Rng>(
    features: &[f64],
    n: usize,
    jitter_sd: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            features
                .iter()
                .map(|&v| {
                    if jitter_sd > 0.0 {
                        v + jitter_sd * rng::standard_normal(rng)
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}
