//! Learning-rate schedules: step decay and warmup-cosine.

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleSpec {
    /// `base_lr / decay_factor^(epoch / decay_every_epochs)`.
    Step {
        base_lr: f64,
        decay_factor: f64,
        decay_every_epochs: usize,
    },
    /// Linear warmup to `max_lr`, then cosine decay to `min_lr` at the
    /// end of the cycle.
    Cosine {
        max_lr: f64,
        min_lr: f64,
        warmup_epochs: usize,
        cycle_epochs: usize,
    },
}

impl ScheduleSpec {
    /// Step decay with the common settings: reduce by `10x` every 5 epochs.
    pub fn step(base_lr: f64) -> Self {
        ScheduleSpec::Step {
            base_lr,
            decay_factor: 10.0,
            decay_every_epochs: 5,
        }
    }

    pub fn cosine(max_lr: f64, epochs: usize) -> Self {
        ScheduleSpec::Cosine {
            max_lr,
            min_lr: 0.0,
            warmup_epochs: epochs / 10,
            cycle_epochs: epochs,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match *self {
            ScheduleSpec::Step {
                base_lr,
                decay_factor,
                decay_every_epochs,
            } => {
                if base_lr.is_nan() || base_lr <= 0.0 {
                    return Err(TrainError::BadConfig(format!(
                        "step base_lr must be positive, got {base_lr}"
                    )));
                }
                if decay_factor.is_nan() || decay_factor <= 1.0 {
                    return Err(TrainError::BadConfig(format!(
                        "step decay_factor must exceed 1, got {decay_factor}"
                    )));
                }
                if decay_every_epochs == 0 {
                    return Err(TrainError::BadConfig(
                        "step decay_every_epochs must be >= 1".to_string(),
                    ));
                }
            }
            ScheduleSpec::Cosine {
                max_lr,
                min_lr,
                warmup_epochs,
                cycle_epochs,
            } => {
                if max_lr.is_nan() || max_lr <= 0.0 {
                    return Err(TrainError::BadConfig(format!(
                        "cosine max_lr must be positive, got {max_lr}"
                    )));
                }
                if min_lr.is_nan() || min_lr < 0.0 || min_lr > max_lr {
                    return Err(TrainError::BadConfig(format!(
                        "cosine min_lr must lie in [0, max_lr], got {min_lr}"
                    )));
                }
                if cycle_epochs <= warmup_epochs {
                    return Err(TrainError::BadConfig(format!(
                        "cosine cycle_epochs ({cycle_epochs}) must exceed warmup_epochs ({warmup_epochs})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Learning rate at a zero-based epoch.
pub fn lr_at(spec: &ScheduleSpec, epoch: usize) -> f64 {
    match *spec {
        ScheduleSpec::Step {
            base_lr,
            decay_factor,
            decay_every_epochs,
        } => base_lr / decay_factor.powi((epoch / decay_every_epochs) as i32),
        ScheduleSpec::Cosine {
            max_lr,
            min_lr,
            warmup_epochs,
            cycle_epochs,
        } => {
            if epoch < warmup_epochs {
                return max_lr * (epoch + 1) as f64 / (warmup_epochs + 1) as f64;
            }
            let progress =
                (epoch - warmup_epochs) as f64 / (cycle_epochs - warmup_epochs) as f64;
            if progress >= 1.0 {
                min_lr
            } else {
                min_lr
                    + 0.5 * (max_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}
