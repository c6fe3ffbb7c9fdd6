use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How dense and sparse branch features are injected into the base stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    /// Sum the two branch outputs, then one zero-initialized linear layer.
    Unified,
    /// One zero-initialized linear layer per branch, outputs summed.
    Separate,
}

/// Which parameter group receives gradient updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    /// Control branches, control tokenizers and fusion layers; base frozen.
    Control,
    /// Base blocks, latent/anchor tokenizers and output head; used to
    /// pretrain the toy base before it is frozen.
    Base,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub token_dim: usize,
    pub n_heads: usize,
    /// Hidden width of each block MLP as a multiple of `token_dim`.
    pub mlp_ratio: usize,
    pub n_base_blocks: usize,
    pub n_control_blocks: usize,
    /// `[T, C, H, W]` of one latent clip.
    pub latent_shape: [usize; 4],
    /// Channels of each control video.
    pub control_channels: usize,
    pub patch: usize,
    pub timesteps: usize,
    pub fusion: FusionVariant,
    pub trainable: Trainable,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            token_dim: 32,
            n_heads: 2,
            mlp_ratio: 2,
            n_base_blocks: 4,
            n_control_blocks: 2,
            latent_shape: [49, 1, 16, 16],
            control_channels: 1,
            patch: 4,
            timesteps: 64,
            fusion: FusionVariant::Unified,
            trainable: Trainable::Control,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.token_dim;
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::config(format!("token_dim must be even and >= 2, got {d}")));
        }
        if self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "token_dim {d} is not divisible by n_heads {}",
                self.n_heads
            )));
        }
        if self.mlp_ratio == 0 {
            return Err(Error::config("mlp_ratio must be >= 1"));
        }
        if self.n_control_blocks == 0 || self.n_control_blocks > self.n_base_blocks {
            return Err(Error::config(format!(
                "n_control_blocks must be in 1..={}, got {}",
                self.n_base_blocks, self.n_control_blocks
            )));
        }
        let [t, c, h, w] = self.latent_shape;
        if t == 0 || c == 0 || h == 0 || w == 0 || self.control_channels == 0 {
            return Err(Error::config(format!(
                "latent shape {:?} has a zero dimension",
                self.latent_shape
            )));
        }
        if self.patch == 0 || h % self.patch != 0 || w % self.patch != 0 {
            return Err(Error::config(format!(
                "latent {h}x{w} is not divisible into {p}x{p} patches",
                p = self.patch
            )));
        }
        if self.timesteps < 2 {
            return Err(Error::config("timesteps must be >= 2"));
        }
        Ok(())
    }

    pub fn half_dim(&self) -> usize {
        self.token_dim / 2
    }

    pub fn mlp_dim(&self) -> usize {
        self.token_dim * self.mlp_ratio
    }

    pub fn tokens_per_frame(&self) -> usize {
        (self.latent_shape[2] / self.patch) * (self.latent_shape[3] / self.patch)
    }

    pub fn n_tokens(&self) -> usize {
        self.latent_shape[0] * self.tokens_per_frame()
    }

    /// Features per latent patch token.
    pub fn patch_dim(&self) -> usize {
        self.latent_shape[1] * self.patch * self.patch
    }

    pub fn control_patch_dim(&self) -> usize {
        self.control_channels * self.patch * self.patch
    }

    /// Pixel-space shape of a clip: the latent is a 2x spatial reduction.
    pub fn pixel_shape(&self) -> [usize; 4] {
        let [t, c, h, w] = self.latent_shape;
        [t, c, 2 * h, 2 * w]
    }

    pub fn control_shape(&self) -> [usize; 4] {
        let [t, _, h, w] = self.latent_shape;
        [t, self.control_channels, 2 * h, 2 * w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig {
            token_dim: 8,
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_odd_width_and_bad_block_counts() {
        let odd = ModelConfig {
            token_dim: 9,
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(odd.validate().is_err());
        let none = ModelConfig {
            n_control_blocks: 0,
            ..ModelConfig::default()
        };
        assert!(none.validate().is_err());
        let too_many = ModelConfig {
            n_control_blocks: 5,
            ..ModelConfig::default()
        };
        assert!(too_many.validate().is_err());
        assert!(ModelConfig::default().validate().is_ok());
    }
}
