use serde::{Deserialize, Serialize};

use crate::error::{RanError, Result};

/// How patch scores are pooled into an image score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    /// `Σ s_k w_k / Σ w_k`.
    Weighted,
    /// Arithmetic mean of `s_k`, ignoring the weights.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdvMode {
    Wgan,
    /// Cross-entropy GAN on `sigmoid(D)`.
    Loggan,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecLoss {
    Perceptual,
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestoratorConfig {
    pub n_blocks: usize,
    pub channels: usize,
}

impl Default for RestoratorConfig {
    fn default() -> Self {
        Self {
            n_blocks: 10,
            channels: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscriminatorConfig {
    /// One conv stage per entry; even-indexed stages have stride 1, odd ones stride 2.
    pub stage_channels: Vec<usize>,
    /// Dense layers after pooling; the last width must be 1.
    pub fc_widths: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            stage_channels: vec![64, 64, 128, 128, 256, 256, 512, 512],
            fc_widths: vec![256, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorConfig {
    /// Width of the concatenated trunk features: twice the last trunk stage.
    pub fused_width: usize,
    /// Dense widths of each head; the last must be 1.
    pub head_widths: Vec<usize>,
    pub shared_trunk: bool,
}

impl Default for EvaluatorConfig {
    fn default() -> Self {
        Self {
            fused_width: 1024,
            head_widths: vec![256, 1],
            shared_trunk: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureNetConfig {
    pub channels: Vec<usize>,
    pub seed: u64,
}

impl Default for FeatureNetConfig {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 32, 64, 64],
            seed: 19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub patch_size: usize,
    pub restorator: RestoratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub evaluator: EvaluatorConfig,
    pub feature_net: FeatureNetConfig,
    /// Leaky-ReLU negative slope.
    pub slope: f64,
    pub lambda_per: f64,
    pub lambda_adv: f64,
    pub aggregate: Aggregate,
    pub adv_mode: AdvMode,
    pub rec_loss: RecLoss,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            patch_size: 64,
            restorator: RestoratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            evaluator: EvaluatorConfig::default(),
            feature_net: FeatureNetConfig::default(),
            slope: 0.2,
            lambda_per: 1.0,
            lambda_adv: 1.0,
            aggregate: Aggregate::Weighted,
            adv_mode: AdvMode::Wgan,
            rec_loss: RecLoss::Perceptual,
        }
    }
}

impl NetworkConfig {
    /// The laptop-scale recipe: 32×32 patches, 2 residual blocks of 16
    /// channels and narrowed critic and evaluator trunks.
    pub fn desk() -> Self {
        Self {
            patch_size: 32,
            restorator: RestoratorConfig {
                n_blocks: 2,
                channels: 16,
            },
            discriminator: DiscriminatorConfig {
                stage_channels: vec![8, 8, 16, 16, 32, 32, 64, 64],
                fc_widths: vec![64, 1],
            },
            evaluator: EvaluatorConfig {
                fused_width: 128,
                head_widths: vec![64, 1],
                shared_trunk: true,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RanError::Argument(m));
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        if self.restorator.n_blocks == 0 || self.restorator.channels < 3 {
            return bad("restorator needs at least one block and three channels".into());
        }
        let stages = &self.discriminator.stage_channels;
        if stages.is_empty() || stages.contains(&0) {
            return bad("discriminator.stage_channels must be non-empty and positive".into());
        }
        for (what, widths) in [
            ("discriminator.fc_widths", &self.discriminator.fc_widths),
            ("evaluator.head_widths", &self.evaluator.head_widths),
        ] {
            if widths.last() != Some(&1) || widths.contains(&0) {
                return bad(format!("{what} must be positive and end in 1, got {widths:?}"));
            }
        }
        let last = *stages.last().expect("non-empty");
        if self.evaluator.fused_width != 2 * last {
            return bad(format!(
                "evaluator.fused_width {} must be twice the last trunk stage ({last})",
                self.evaluator.fused_width
            ));
        }
        if self.feature_net.channels.len() != 5 || self.feature_net.channels.contains(&0) {
            return bad(format!(
                "feature_net.channels needs 5 positive entries, got {:?}",
                self.feature_net.channels
            ));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return bad(format!("slope {} outside [0, 1)", self.slope));
        }
        if !(self.lambda_per >= 0.0 && self.lambda_adv >= 0.0) {
            return bad("loss weights must be non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        NetworkConfig::default().validate().unwrap();
        NetworkConfig::desk().validate().unwrap();
        assert_eq!(NetworkConfig::default().evaluator.fused_width, 1024);
    }

    #[test]
    fn rejects_inconsistent() {
        let mut c = NetworkConfig::desk();
        c.evaluator.fused_width = 100;
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::desk();
        c.feature_net.channels.pop();
        assert!(c.validate().is_err());
        let mut c = NetworkConfig::desk();
        c.restorator.n_blocks = 0;
        assert!(c.validate().is_err());
    }
}
