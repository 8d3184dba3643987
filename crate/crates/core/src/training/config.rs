use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::losses::check_beta;
use crate::data::{generate_synthetic_dataset, Dataset, SceneConfig};
use crate::error::{Error, Result};
use crate::networks::ArchConfig;
use crate::tensor::AdamConfig;

/// Weight of the adversarial term: fixed, or re-estimated from the loss
/// history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BetaRepr", into = "BetaRepr")]
pub enum Beta {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BetaRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<BetaRepr> for Beta {
    type Error = String;

    fn try_from(r: BetaRepr) -> Result<Self, String> {
        match r {
            BetaRepr::Number(b) => Ok(Beta::Fixed(b)),
            BetaRepr::Text(s) if s == "auto" => Ok(Beta::Auto),
            BetaRepr::Text(s) => Err(format!("beta must be a number or \"auto\", got {s:?}")),
        }
    }
}

impl From<Beta> for BetaRepr {
    fn from(b: Beta) -> Self {
        match b {
            Beta::Auto => BetaRepr::Text("auto".into()),
            Beta::Fixed(v) => BetaRepr::Number(v),
        }
    }
}

impl fmt::Display for Beta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Beta::Auto => f.write_str("auto"),
            Beta::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Synthetic training data generated when no dataset directory is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticData {
    /// Scene preset name, see [`crate::data::SceneConfig::preset`].
    pub scene: String,
    pub sequences: usize,
}

impl SyntheticData {
    /// The configured sequences, texture seeds derived from `seed`.
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        generate_synthetic_dataset(seed, &SceneConfig::preset(&self.scene)?, self.sequences)
    }
}

impl Default for SyntheticData {
    fn default() -> Self {
        Self {
            scene: "toy".into(),
            sequences: 4,
        }
    }
}

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub beta: Beta,
    /// Steps averaged by the automatic balance estimate.
    pub beta_window: usize,
    /// Balance used in automatic mode until a full window is recorded.
    pub beta_initial: f64,
    pub steps: u64,
    /// Checkpoint period in steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
    pub seed: u64,
    /// Bits per float; only 64 is implemented.
    pub float_width: u32,
    /// Exclude pixels without a valid projection from the photometric loss.
    pub mask_invalid: bool,
    /// Fill invalid reconstruction pixels from the real target before the
    /// discriminator sees them.
    pub composite_fake: bool,
    pub arch: ArchConfig,
    pub synthetic: SyntheticData,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 8,
            beta: Beta::Auto,
            beta_window: 100,
            beta_initial: 0.1,
            steps: 1000,
            checkpoint_every: 0,
            seed: 0,
            float_width: 64,
            mask_invalid: true,
            composite_fake: true,
            arch: ArchConfig::toy(),
            synthetic: SyntheticData::default(),
        }
    }
}

impl TrainConfig {
    /// Desk-scale run on 16x48 synthetic frames.
    pub fn toy() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 4,
            steps: 500,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.float_width != 64 {
            return cfg(format!(
                "float_width {} is not supported, only 64",
                self.float_width
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return cfg(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&b) {
                return cfg(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return cfg(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if self.batch_size == 0 {
            return cfg("batch size must be at least 1".into());
        }
        match self.beta {
            Beta::Fixed(b) => check_beta(b)?,
            Beta::Auto => {
                check_beta(self.beta_initial)?;
                if self.beta_window == 0 {
                    return cfg("beta_window must be positive".into());
                }
            }
        }
        if self.synthetic.sequences == 0 {
            return cfg("synthetic.sequences must be positive".into());
        }
        SceneConfig::preset(&self.synthetic.scene)?;
        self.arch.validate()
    }
}
