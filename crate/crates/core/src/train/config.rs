use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{bail, Error, Result};
use crate::model::{EncoderKind, ModelConfig};

/// Ablation variant: which rule sets feed the inferencer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[default]
    #[serde(rename = "NLR")]
    Nlr,
    #[serde(rename = "NLR-S")]
    NoS,
    #[serde(rename = "NLR-U")]
    NoU,
    #[serde(rename = "NLR-SU")]
    NoSu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Nlr, Variant::NoS, Variant::NoU, Variant::NoSu];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Nlr => "NLR",
            Variant::NoS => "NLR-S",
            Variant::NoU => "NLR-U",
            Variant::NoSu => "NLR-SU",
        }
    }

    pub fn uses_s(self) -> bool {
        matches!(self, Variant::Nlr | Variant::NoU)
    }

    pub fn uses_u(self) -> bool {
        matches!(self, Variant::Nlr | Variant::NoS)
    }

    pub fn needs_rules(self) -> bool {
        self.uses_s() || self.uses_u()
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variant {s:?} (expected NLR, NLR-S, NLR-U or NLR-SU)"))
    }
}

/// Granularity of optimizer updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateMode {
    /// One update per dialog from the summed turn losses.
    #[default]
    Dialog,
    /// One update per turn; the recurrent state is carried forward as a
    /// constant (truncated backpropagation).
    Turn,
}

impl std::str::FromStr for UpdateMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dialog" => Ok(UpdateMode::Dialog),
            "turn" => Ok(UpdateMode::Turn),
            _ => Err(format!("unknown update mode {s:?} (expected dialog or turn)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub domain: Option<String>,
    pub variant: Variant,
    pub model: ModelConfig,
    pub lr: f64,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub rules: Option<PathBuf>,
    pub word_vectors: Option<PathBuf>,
    /// Train on the first `n` dialogs of a seeded shuffle of the train split.
    pub train_size: Option<usize>,
    pub update: UpdateMode,
    pub resample_per_epoch: bool,
    /// Split whose recall@1 drives early stopping and model selection.
    pub select_on: Split,
    /// Evaluate against the full catalog instead of the sampled candidates.
    pub full_catalog: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            domain: None,
            variant: Variant::Nlr,
            model: ModelConfig::default(),
            lr: 1e-3,
            clip_norm: 5.0,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            rules: None,
            word_vectors: None,
            train_size: None,
            update: UpdateMode::Dialog,
            resample_per_epoch: false,
            select_on: Split::Dev,
            full_catalog: false,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!(Config, "lr must be positive, got {}", self.lr);
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            bail!(Config, "clip_norm must be positive, got {}", self.clip_norm);
        }
        if self.max_epochs == 0 {
            bail!(Config, "max_epochs must be at least 1");
        }
        if self.train_size == Some(0) {
            bail!(Config, "train_size must be at least 1");
        }
        if self.variant.needs_rules() && self.rules.is_none() {
            bail!(Config, "variant {} needs a rule file", self.variant);
        }
        match self.model.encoder {
            EncoderKind::WordVectors if self.word_vectors.is_none() => {
                bail!(Config, "encoder WE needs a word-vector file")
            }
            _ => {}
        }
        Ok(())
    }
}
