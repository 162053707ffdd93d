//! Synthetic scene generator.
//!
//! Each scene gets its own latent-to-JOD affine map `a_s * u + b_s`
//! (a_s > 0), mimicking independent per-scene quality scales. Feature
//! vectors are a fixed random projection of `(u, one-hot scene)` plus
//! Gaussian noise, so both within-scene ranking and scene identity are
//! recoverable by a model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{DataError, ImageRecord, Manifest};
use crate::rng;

/// Configuration of [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_scenes: usize,
    pub images_per_scene: usize,
    pub feature_dim: usize,
    /// Range of the per-scene positive multiplier `a_s`.
    pub scene_scale_range: (f64, f64),
    /// Range of the per-scene offset `b_s`.
    pub scene_shift_range: (f64, f64),
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_scenes: 8,
            images_per_scene: 40,
            feature_dim: 16,
            scene_scale_range: (0.5, 2.0),
            scene_shift_range: (1.0, 4.0),
            noise_sd: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), DataError> {
        if self.n_scenes == 0 {
            return Err(DataError::InvalidConfig("n_scenes must be >= 1".into()));
        }
        if self.images_per_scene < 2 {
            return Err(DataError::InvalidConfig(
                "images_per_scene must be >= 2".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(DataError::InvalidConfig("feature_dim must be >= 1".into()));
        }
        let (a_min, a_max) = self.scene_scale_range;
        if a_min.is_nan() || a_max.is_nan() || a_min <= 0.0 || a_max < a_min {
            return Err(DataError::InvalidConfig(format!(
                "scene_scale_range ({a_min}, {a_max}) must satisfy 0 < a_min <= a_max"
            )));
        }
        let (b_min, b_max) = self.scene_shift_range;
        if b_max < b_min {
            return Err(DataError::InvalidConfig(format!(
                "scene_shift_range ({b_min}, {b_max}) must satisfy b_min <= b_max"
            )));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(DataError::InvalidConfig("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-image feature vectors, read-only after generation.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    dim: usize,
    features: BTreeMap<String, Vec<f64>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            features: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn insert(&mut self, image_id: String, feature: Vec<f64>) -> Result<(), DataError> {
        if feature.len() != self.dim {
            return Err(DataError::FeatureDimMismatch {
                image_id,
                expected: self.dim,
                found: feature.len(),
            });
        }
        self.features.insert(image_id, feature);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&[f64]> {
        self.features.get(image_id).map(Vec::as_slice)
    }

    /// The feature vector for `image_id`, or a missing-feature error.
    pub fn require(&self, image_id: &str) -> Result<&[f64], DataError> {
        self.get(image_id)
            .ok_or_else(|| DataError::MissingFeature(image_id.to_string()))
    }

    /// CSV form: `image_id,f0,...,f{dim-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id");
        for i in 0..self.dim {
            let _ = write!(out, ",f{i}");
        }
        out.push('\n');
        for (id, feat) in &self.features {
            out.push_str(id);
            for v in feat {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_csv()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let file = std::fs::File::open(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::load_from(file)
    }

    pub fn load_from<R: std::io::Read>(reader: R) -> Result<Self, DataError> {
        let mut csv_reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut rows = csv_reader.records();
        let header = match rows.next() {
            Some(Ok(h)) => h,
            Some(Err(e)) => {
                return Err(DataError::MalformedRow {
                    line: 1,
                    reason: e.to_string(),
                })
            }
            None => return Err(DataError::BadHeader(String::new())),
        };
        if header.get(0).map(str::trim) != Some("image_id") || header.len() < 2 {
            return Err(DataError::BadHeader(
                header.iter().collect::<Vec<_>>().join(","),
            ));
        }
        let dim = header.len() - 1;
        let mut store = Self::new(dim);
        for (i, row) in rows.enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| DataError::MalformedRow {
                line,
                reason: e.to_string(),
            })?;
            let image_id = row
                .get(0)
                .ok_or_else(|| DataError::MalformedRow {
                    line,
                    reason: "missing image_id".to_string(),
                })?
                .trim()
                .to_string();
            let mut feature = Vec::with_capacity(dim);
            for field in row.iter().skip(1) {
                let v = field.trim().parse::<f64>().map_err(|_| DataError::MalformedRow {
                    line,
                    reason: format!("cannot parse feature value {field:?}"),
                })?;
                feature.push(v);
            }
            store.insert(image_id, feature)?;
        }
        Ok(store)
    }
}

/// Everything the generator knows about the data it made. The manifest
/// and features are the on-disk artifacts; latents and scene scales are
/// exposed for verification.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: Manifest,
    pub features: FeatureStore,
    /// Latent quality per record, aligned with `manifest.records()`.
    pub latents: Vec<f64>,
    /// Per-scene `(multiplier, offset)` of the latent-to-JOD map.
    pub scene_scales: BTreeMap<String, (f64, f64)>,
}

/// Generate a scene-grouped synthetic dataset. Bit-identical output for
/// identical configs.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticDataset, DataError> {
    config.validate()?;
    let input_dim = 1 + config.n_scenes;
    let mut proj_rng = rng::stream(config.seed, "synthetic/projection");
    // Row-major feature_dim x (1 + n_scenes) projection.
    let projection = rng::normal_vec(&mut proj_rng, config.feature_dim * input_dim);

    let mut noise_rng = rng::stream(config.seed, "synthetic/noise");
    let mut records = Vec::with_capacity(config.n_scenes * config.images_per_scene);
    let mut features = FeatureStore::new(config.feature_dim);
    let mut latents = Vec::with_capacity(records.capacity());
    let mut scene_scales = BTreeMap::new();

    for s in 0..config.n_scenes {
        let scene_id = format!("scene_{s:03}");
        let mut scene_rng = rng::stream(config.seed, &format!("synthetic/{scene_id}"));
        let (a_min, a_max) = config.scene_scale_range;
        let (b_min, b_max) = config.scene_shift_range;
        let a = rng::uniform(&mut scene_rng, a_min, a_max);
        let b = rng::uniform(&mut scene_rng, b_min, b_max);
        scene_scales.insert(scene_id.clone(), (a, b));

        for i in 0..config.images_per_scene {
            let image_id = format!("{scene_id}_img_{i:03}");
            let u = rng::standard_normal(&mut scene_rng);
            let jod = a * u + b;
            let mut feature = Vec::with_capacity(config.feature_dim);
            for row in 0..config.feature_dim {
                let base = row * input_dim;
                // projection . [u, one-hot(scene)]
                let mut v = projection[base] * u + projection[base + 1 + s];
                if config.noise_sd > 0.0 {
                    v += config.noise_sd * rng::standard_normal(&mut noise_rng);
                }
                feature.push(v);
            }
            features.insert(image_id.clone(), feature)?;
            latents.push(u);
            records.push(ImageRecord {
                image_id,
                scene_id: scene_id.clone(),
                source: "synthetic".to_string(),
                jod_overall: jod,
                jod_detail: None,
                jod_exposure: None,
            });
        }
    }

    Ok(SyntheticDataset {
        manifest: Manifest::from_records(records)?,
        features,
        latents,
        scene_scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::manifest_to_csv;

    fn config(n_scenes: usize, per_scene: usize, noise_sd: f64, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            n_scenes,
            images_per_scene: per_scene,
            noise_sd,
            seed,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn counts_and_distinct_scales() {
        let data = generate_synthetic(&config(4, 10, 0.0, 0)).unwrap();
        assert_eq!(data.manifest.len(), 40);
        assert_eq!(data.manifest.n_scenes(), 4);
        assert_eq!(data.features.len(), 40);
        let scales: Vec<(f64, f64)> = data.scene_scales.values().copied().collect();
        for i in 0..scales.len() {
            for j in (i + 1)..scales.len() {
                assert_ne!(scales[i], scales[j]);
            }
        }
    }

    #[test]
    fn noise_free_latent_order_matches_jod_order() {
        let data = generate_synthetic(&config(4, 12, 0.0, 3)).unwrap();
        for (scene_id, members) in data.manifest.scenes() {
            let mut by_latent: Vec<usize> = members.to_vec();
            by_latent.sort_by(|&a, &b| data.latents[a].total_cmp(&data.latents[b]));
            let mut by_jod: Vec<usize> = members.to_vec();
            by_jod.sort_by(|&a, &b| {
                data.manifest.records()[a]
                    .jod_overall
                    .total_cmp(&data.manifest.records()[b].jod_overall)
            });
            assert_eq!(by_latent, by_jod, "scene {scene_id}");
        }
    }

    #[test]
    fn noise_free_latent_spearman_is_exactly_one() {
        let data = generate_synthetic(&config(5, 9, 0.0, 8)).unwrap();
        for (scene_id, members) in data.manifest.scenes() {
            let latents: Vec<f64> = members.iter().map(|&i| data.latents[i]).collect();
            let jods: Vec<f64> = members
                .iter()
                .map(|&i| data.manifest.records()[i].jod_overall)
                .collect();
            let rho = crate::metrics::srcc(&latents, &jods).unwrap();
            assert_eq!(rho, Some(1.0), "scene {scene_id}");
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic(&config(3, 8, 0.1, 42)).unwrap();
        let b = generate_synthetic(&config(3, 8, 0.1, 42)).unwrap();
        assert_eq!(manifest_to_csv(&a.manifest), manifest_to_csv(&b.manifest));
        assert_eq!(a.features.to_csv(), b.features.to_csv());
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(&config(3, 8, 0.0, 1)).unwrap();
        let b = generate_synthetic(&config(3, 8, 0.0, 2)).unwrap();
        assert_ne!(manifest_to_csv(&a.manifest), manifest_to_csv(&b.manifest));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_synthetic(&config(0, 10, 0.0, 0)).is_err());
        assert!(generate_synthetic(&config(2, 1, 0.0, 0)).is_err());
        let mut c = config(2, 4, 0.0, 0);
        c.scene_scale_range = (0.0, 1.0);
        assert!(generate_synthetic(&c).is_err());
        c = config(2, 4, -0.1, 0);
        assert!(generate_synthetic(&c).is_err());
    }

    #[test]
    fn feature_store_round_trips() {
        let data = generate_synthetic(&config(2, 4, 0.05, 9)).unwrap();
        let csv = data.features.to_csv();
        let reloaded = FeatureStore::load_from(csv.as_bytes()).unwrap();
        assert_eq!(reloaded.dim(), data.features.dim());
        assert_eq!(reloaded.to_csv(), csv);
    }

    #[test]
    fn feature_store_rejects_wrong_dim() {
        let mut store = FeatureStore::new(3);
        assert!(matches!(
            store.insert("x".into(), vec![1.0, 2.0]),
            Err(DataError::FeatureDimMismatch { .. })
        ));
    }
}
