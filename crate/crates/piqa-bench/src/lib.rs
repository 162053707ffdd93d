//! Shared fixtures for the criterion benchmarks.

use piqa_core::data::{generate_synthetic, SyntheticConfig, SyntheticDataset};

/// A deterministic mid-sized dataset: 8 scenes of 40 images.
pub fn bench_dataset() -> SyntheticDataset {
    generate_synthetic(&SyntheticConfig {
        n_scenes: 8,
        images_per_scene: 40,
        feature_dim: 16,
        noise_sd: 0.02,
        seed: 1234,
        ..SyntheticConfig::default()
    })
    .expect("valid config")
}
