//! Run configuration shared by all subcommands. Read from JSON, overridden
//! by command-line flags, and written back out next to every output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::{Scheme, DEFAULT_LD_P};
use crate::error::{Error, Result};
use crate::neural::{ModelConfig, Preset};
use crate::synth::SynthConfig;
use crate::vocab::{DEFAULT_LEMMA_MIN_FREQ, DEFAULT_SUBWORD_MIN_FREQ};

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SFNMT_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpeSection {
    pub merges: usize,
    pub marker: String,
    /// Learn one table over source and target text.
    pub joint: bool,
}

impl Default for BpeSection {
    fn default() -> Self {
        Self {
            merges: 10_000,
            marker: "@@".into(),
            joint: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub lemma_min_freq: u64,
    pub subword_min_freq: u64,
    pub lemma_max_size: Option<usize>,
}

impl Default for VocabSection {
    fn default() -> Self {
        Self {
            lemma_min_freq: DEFAULT_LEMMA_MIN_FREQ,
            subword_min_freq: DEFAULT_SUBWORD_MIN_FREQ,
            lemma_max_size: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingSection {
    pub scheme: Scheme,
    /// Linguistic dropout probability; `None` means the scheme default.
    pub ld_p: Option<f64>,
    /// Epoch number fed to the dropout sampler by `encode`.
    pub epoch: u64,
}

impl Default for EncodingSection {
    fn default() -> Self {
        Self {
            scheme: Scheme::Sparse,
            ld_p: None,
            epoch: 0,
        }
    }
}

impl EncodingSection {
    /// 0.25 under the sparse scheme, 0 otherwise.
    pub fn effective_ld_p(&self) -> f64 {
        match (self.ld_p, self.scheme) {
            (Some(p), _) => p,
            (None, Scheme::Sparse) => DEFAULT_LD_P,
            (None, _) => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub preset: Preset,
    /// Full model configuration; replaces the preset when present.
    pub model: Option<ModelConfig>,
    pub epochs: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            preset: Preset::Desk,
            model: None,
            epochs: 20,
        }
    }
}

impl TrainSection {
    pub fn model_config(&self) -> ModelConfig {
        self.model
            .clone()
            .unwrap_or_else(|| ModelConfig::preset(self.preset))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    pub sentences: usize,
    pub coordinates: usize,
    pub epsilon: f64,
    pub tolerance: f64,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        Self {
            sentences: 4,
            coordinates: 240,
            epsilon: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    pub bpe: BpeSection,
    pub vocab: VocabSection,
    pub encoding: EncodingSection,
    pub train: TrainSection,
    pub grad_check: GradCheckSection,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// `explicit` if given, else the path in the environment variable, else
    /// defaults.
    pub fn resolve_path(explicit: Option<&Path>) -> Option<PathBuf> {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let c = RunConfig::from_json("{\"seed\": 9, \"bpe\": {\"merges\": 7}}").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.bpe.merges, 7);
        assert_eq!(c.bpe.marker, "@@");
        assert_eq!(c.encoding.effective_ld_p(), 0.25);
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
        assert!(RunConfig::from_json("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn ld_p_default_depends_on_scheme() {
        let mut e = EncodingSection::default();
        e.scheme = Scheme::Bpe;
        assert_eq!(e.effective_ld_p(), 0.0);
        e.ld_p = Some(1.0);
        assert_eq!(e.effective_ld_p(), 1.0);
    }
}
