use serde::{Deserialize, Serialize};

use crate::error::{RanError, Result};

/// Reference-level split fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(RanError::Argument(format!(
                "split fractions {parts:?} must lie in [0, 1] and sum to 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub phase1_iters: usize,
    /// Adversarial iterations at `phase2_lr`.
    pub phase2_iters: usize,
    /// Adversarial iterations after the drop to `phase2_low_lr`.
    pub phase2_low_lr_iters: usize,
    pub phase3_iters: usize,
    pub phase4_iters: usize,
    /// Patches per step in phases 1 to 3.
    pub batch_size: usize,
    /// Whole images per step in phase 4.
    pub images_per_batch: usize,
    pub phase1_lr: f64,
    pub phase2_lr: f64,
    pub phase2_low_lr: f64,
    pub phase3_lr: f64,
    pub phase4_lr: f64,
    pub critic_steps: usize,
    pub clip: f64,
    /// Phase-4 validation interval in iterations.
    pub val_every: usize,
    pub seed: u64,
    pub split: SplitSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            phase1_iters: 3000,
            phase2_iters: 3000,
            phase2_low_lr_iters: 3000,
            phase3_iters: 3000,
            phase4_iters: 1000,
            batch_size: 16,
            images_per_batch: 4,
            phase1_lr: 1e-4,
            phase2_lr: 1e-4,
            phase2_low_lr: 1e-5,
            phase3_lr: 1e-4,
            phase4_lr: 1e-4,
            critic_steps: 5,
            clip: 0.05,
            val_every: 50,
            seed: 0,
            split: SplitSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Iteration counts of the full-scale schedule.
    pub fn full_scale() -> Self {
        Self {
            phase1_iters: 300_000,
            phase2_iters: 300_000,
            phase2_low_lr_iters: 300_000,
            phase3_iters: 300_000,
            phase4_iters: 20_000,
            ..Self::default()
        }
    }

    /// The laptop-scale schedule paired with [`NetworkConfig::desk`]. Phase 3
    /// runs at ten times the default rate so the short pretraining converges;
    /// phase 4 fine-tunes gently at the low rate.
    ///
    /// [`NetworkConfig::desk`]: crate::nets::NetworkConfig::desk
    pub fn desk() -> Self {
        Self {
            phase1_iters: 1500,
            phase2_iters: 300,
            phase2_low_lr_iters: 300,
            phase3_iters: 5000,
            phase4_iters: 1500,
            phase3_lr: 1e-3,
            phase4_lr: 1e-5,
            val_every: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("phase1_iters", self.phase1_iters),
            ("phase2_iters", self.phase2_iters),
            ("phase2_low_lr_iters", self.phase2_low_lr_iters),
            ("phase3_iters", self.phase3_iters),
            ("phase4_iters", self.phase4_iters),
            ("batch_size", self.batch_size),
            ("images_per_batch", self.images_per_batch),
            ("critic_steps", self.critic_steps),
            ("val_every", self.val_every),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(RanError::Argument(format!("{name} must be at least 1")));
        }
        for (name, v) in [
            ("phase1_lr", self.phase1_lr),
            ("phase2_lr", self.phase2_lr),
            ("phase2_low_lr", self.phase2_low_lr),
            ("phase3_lr", self.phase3_lr),
            ("phase4_lr", self.phase4_lr),
            ("clip", self.clip),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RanError::Argument(format!("{name} must be positive, got {v}")));
            }
        }
        self.split.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::full_scale().validate().unwrap();
        TrainConfig::desk().validate().unwrap();
        let mut c = TrainConfig {
            critic_steps: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.split.val = 0.3;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.phase4_lr = 0.0;
        assert!(c.validate().is_err());
    }
}
