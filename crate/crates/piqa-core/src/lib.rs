//! Scene-wise portrait image quality assessment toolkit.
//!
//! Ground-truth quality lives on independent per-scene JOD scales, so
//! everything here is built around within-scene comparison: ranking and
//! relative-quality losses, per-scene correlation metrics with median
//! aggregation, a family of toy content-adaptive models (hypernetwork,
//! scene-rescaled variants, attention opinion pooling, gated fusion),
//! scene-balanced training, and crop-averaged inference. A synthetic
//! scene generator makes the whole pipeline verifiable end to end.

pub mod autodiff;
pub mod data;
pub mod inference;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod training;
