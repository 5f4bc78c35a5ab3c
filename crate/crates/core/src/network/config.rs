use serde::{Deserialize, Serialize};

use crate::attention::AttentionConfig;
use crate::edge::EdgeConfig;
use crate::error::{Error, Result};
use crate::gms::GmsConfig;

/// Number of image scales: full, half and quarter resolution.
pub const SCALES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub scales: usize,
    /// RCAB count per body, largest scale first.
    pub blocks_per_scale: Vec<usize>,
    pub channels: usize,
    /// Output/input size ratio: 1 for denoising and deblurring, 2 or 4 for super-resolution.
    pub sr_scale: usize,
    pub edge: EdgeConfig,
    pub attention: AttentionConfig,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            scales: SCALES,
            blocks_per_scale: vec![4, 16, 64],
            channels: 64,
            sr_scale: 1,
            edge: EdgeConfig::default(),
            attention: AttentionConfig::default(),
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// Small configuration that trains on a laptop CPU.
    pub fn desk() -> Self {
        NetworkConfig {
            blocks_per_scale: vec![1, 2, 4],
            channels: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.scales != SCALES {
            return bad(format!("scales must be {SCALES}, got {}", self.scales));
        }
        if self.blocks_per_scale.len() != self.scales {
            return bad(format!(
                "blocks_per_scale has {} entries for {} scales",
                self.blocks_per_scale.len(),
                self.scales
            ));
        }
        if self.blocks_per_scale.contains(&0) {
            return bad("every body needs at least one block".into());
        }
        if !matches!(self.sr_scale, 1 | 2 | 4) {
            return bad(format!("sr_scale must be 1, 2 or 4, got {}", self.sr_scale));
        }
        let r = self.attention.reduction;
        if self.channels == 0 || r == 0 || !self.channels.is_multiple_of(r) {
            return bad(format!("channels {} must be a positive multiple of reduction {r}", self.channels));
        }
        if self.edge.scales == 0 {
            return bad("edge bank needs at least one dilation".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub l1: f64,
    pub hf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { l1: 1.0, hf: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskedConfig {
    /// Fine-tuning steps run after the main schedule; 0 disables the phase.
    pub steps: u64,
    pub gms: GmsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patch_size: usize,
    pub base_lr: f64,
    pub max_steps: u64,
    pub loss: LossWeights,
    pub masked: MaskedConfig,
    pub augment: bool,
    pub seed: u64,
    /// Log to stderr every this many steps.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            patch_size: 192,
            base_lr: 1e-4,
            max_steps: 1000,
            loss: LossWeights::default(),
            masked: MaskedConfig::default(),
            augment: true,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let w = self.loss;
        if !(w.l1 >= 0.0 && w.hf >= 0.0) || (w.l1 == 0.0 && w.hf == 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative with one positive, got l1={} hf={}",
                w.l1, w.hf
            )));
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(Error::Config("batch_size and patch_size must be positive".into()));
        }
        if !self.patch_size.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "patch_size {} must be divisible by 4",
                self.patch_size
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be positive", self.base_lr)));
        }
        Ok(())
    }
}

/// The `[network]` and `[train]` sections of one TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.network.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
