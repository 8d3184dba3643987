use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DisparityRange;
use crate::tensor::conv_output_size;

/// Shapes and widths of the four models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub height: usize,
    pub width: usize,
    /// Strided conv levels in the encoder and discriminator, mirrored by the
    /// generator.
    pub levels: usize,
    pub base_width: usize,
    pub max_width: usize,
    pub latent_dim: usize,
    /// Frames per sample, target in the middle.
    pub seq_len: usize,
    pub pose_levels: usize,
    pub pose_base_width: usize,
    /// Feature channels per frame fed to the recurrent layers.
    pub pose_features: usize,
    pub lstm_hidden: usize,
    pub pose_scale: f64,
    pub disparity: DisparityRange,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ArchConfig {
    /// 16x48 images, four levels.
    pub fn toy() -> Self {
        Self {
            height: 16,
            width: 48,
            levels: 4,
            base_width: 16,
            max_width: 512,
            latent_dim: 64,
            seq_len: 3,
            pose_levels: 3,
            pose_base_width: 16,
            pose_features: 16,
            lstm_hidden: 32,
            pose_scale: 0.01,
            disparity: DisparityRange::default(),
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// 128x416 images, seven levels.
    pub fn paper() -> Self {
        Self {
            height: 128,
            width: 416,
            levels: 7,
            base_width: 32,
            latent_dim: 512,
            pose_levels: 5,
            pose_base_width: 32,
            pose_features: 64,
            lstm_hidden: 256,
            ..Self::toy()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Ok(Self::toy()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!(
                "unknown architecture preset {other:?} (expected toy or paper)"
            ))),
        }
    }

    /// Output channels of strided level `i`.
    pub fn level_width(&self, i: usize) -> usize {
        (self.base_width << i.min(30)).min(self.max_width)
    }

    pub fn pose_level_width(&self, i: usize) -> usize {
        (self.pose_base_width << i.min(30)).min(self.max_width)
    }

    /// Spatial sizes `(h, w)` before each strided level and after the last,
    /// `levels + 1` entries.
    pub fn pyramid(&self) -> Result<Vec<(usize, usize)>> {
        pyramid(self.height, self.width, self.levels)
    }

    pub fn pose_pyramid(&self) -> Result<Vec<(usize, usize)>> {
        pyramid(self.height, self.width, self.pose_levels)
    }

    pub fn num_sources(&self) -> usize {
        self.seq_len.saturating_sub(1)
    }

    pub fn target_index(&self) -> usize {
        self.seq_len.saturating_sub(1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.seq_len < 2 {
            return cfg(format!(
                "sequence length must be at least 2, got {}",
                self.seq_len
            ));
        }
        if self.levels == 0 || self.pose_levels == 0 {
            return cfg("levels and pose_levels must be positive".into());
        }
        for (name, v) in [
            ("base_width", self.base_width),
            ("max_width", self.max_width),
            ("latent_dim", self.latent_dim),
            ("pose_base_width", self.pose_base_width),
            ("pose_features", self.pose_features),
            ("lstm_hidden", self.lstm_hidden),
        ] {
            if v == 0 {
                return cfg(format!("{name} must be positive"));
            }
        }
        if !(self.pose_scale.is_finite() && self.pose_scale > 0.0) {
            return cfg(format!(
                "pose_scale must be positive, got {}",
                self.pose_scale
            ));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return cfg(format!(
                "bn_momentum must be in (0, 1], got {}",
                self.bn_momentum
            ));
        }
        if !(self.bn_eps > 0.0 && self.bn_eps.is_finite()) {
            return cfg(format!("bn_eps must be positive, got {}", self.bn_eps));
        }
        self.disparity.validate()?;
        self.pyramid()?;
        self.pose_pyramid()?;
        Ok(())
    }
}

fn pyramid(height: usize, width: usize, levels: usize) -> Result<Vec<(usize, usize)>> {
    let mut sizes = vec![(height, width)];
    let (mut h, mut w) = (height, width);
    for level in 0..levels {
        match (conv_output_size(h, 4, 2, 1), conv_output_size(w, 4, 2, 1)) {
            (Some(nh), Some(nw)) if nh >= 1 && nw >= 1 && h >= 2 && w >= 2 => {
                h = nh;
                w = nw;
            }
            _ => {
                return Err(Error::Config(format!(
                    "image {height}x{width} is too small for {levels} levels (level {level} sees {h}x{w})"
                )))
            }
        }
        sizes.push((h, w));
    }
    Ok(sizes)
}
