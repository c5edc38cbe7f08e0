use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Named architecture presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// CPU-sized model used by tests and the synthetic experiments.
    Desk,
    /// IWSLT14 de-en configuration.
    PaperDeEn,
    /// EiTB eu-es configuration (transformer base, smaller batch).
    PaperEuEs,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperDeEn => "paper-de-en",
            Preset::PaperEuEs => "paper-eu-es",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper-de-en" => Ok(Preset::PaperDeEn),
            "paper-eu-es" => Ok(Preset::PaperEuEs),
            other => Err(format!("unknown preset {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    /// Model (embedding) dimension.
    pub d_model: usize,
    pub ff_dim: usize,
    /// Token budget per batch.
    pub batch_tokens: usize,
    pub dropout: f64,
    pub label_smoothing: f64,
    pub lr: f64,
    pub warmup_steps: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Longest source or decoder-input sequence accepted.
    pub max_len: usize,
    /// Factored baseline: width of the combination slice.
    pub d_combination: usize,
    /// Factored baseline: width of the position slice.
    pub d_position: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn preset(preset: Preset) -> Self {
        let (layers, heads, d_model, ff_dim, batch_tokens) = match preset {
            Preset::Desk => (2, 2, 64, 128, 512),
            Preset::PaperDeEn => (6, 4, 512, 1024, 4096),
            Preset::PaperEuEs => (6, 8, 512, 2048, 4096),
        };
        let (lr, warmup_steps) = match preset {
            Preset::Desk => (2e-3, 100),
            _ => (5e-4, 4000),
        };
        Self {
            layers,
            heads,
            d_model,
            ff_dim,
            batch_tokens,
            dropout: 0.1,
            label_smoothing: 0.1,
            lr,
            warmup_steps,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-9,
            max_len: 256,
            d_combination: d_model / 8,
            d_position: d_model / 8,
            seed: 1,
        }
    }

    pub fn desk() -> Self {
        Self::preset(Preset::Desk)
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_model", self.d_model),
            ("ff_dim", self.ff_dim),
            ("batch_tokens", self.batch_tokens),
            ("max_len", self.max_len),
            ("d_combination", self.d_combination),
            ("d_position", self.d_position),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.d_combination + self.d_position >= self.d_model {
            return Err(Error::Config(
                "factored slices leave no room for the subword embedding".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config(format!(
                "label smoothing {} not in [0, 1)",
                self.label_smoothing
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is invalid", self.lr)));
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` (1-based): linear warmup, then
    /// inverse square root decay.
    pub fn lr_at(&self, step: u64) -> f64 {
        let step = step.max(1) as f64;
        if self.warmup_steps == 0 {
            return self.lr;
        }
        let w = self.warmup_steps as f64;
        self.lr * (step / w).min((w / step).sqrt())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}
