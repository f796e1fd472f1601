use serde::{Deserialize, Serialize};

use crate::nlr::NoMatchBias;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Word embeddings and sentence encoder trained from scratch.
    #[default]
    #[serde(rename = "SC", alias = "sc")]
    Scratch,
    /// Word embeddings initialized from a pretrained vector file.
    #[serde(rename = "WE", alias = "we")]
    WordVectors,
    /// Parameter-free hash encoder, for tests and analysis.
    #[serde(rename = "stub")]
    Stub,
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sc" => Ok(EncoderKind::Scratch),
            "we" => Ok(EncoderKind::WordVectors),
            "stub" => Ok(EncoderKind::Stub),
            _ => Err(format!("unknown encoder {s:?} (expected SC, WE or stub)")),
        }
    }
}

/// How the response embedding is compared to candidate embeddings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// `cos(r, a_k) / τ`.
    #[default]
    Cosine,
    /// `r · a_k`.
    Dot,
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub word_dim: usize,
    /// Hidden units per direction of the sentence encoder; sentence
    /// embeddings have twice this width.
    pub sentence_hidden: usize,
    pub context_hidden: usize,
    pub encoder: EncoderKind,
    pub score: ScoreMode,
    pub api_dim: usize,
    pub nomatch_bias: NoMatchBias,
    /// Keep pretrained word vectors fixed.
    pub freeze_word_vectors: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 100,
            sentence_hidden: 100,
            context_hidden: 200,
            encoder: EncoderKind::Scratch,
            score: ScoreMode::Cosine,
            api_dim: 0,
            nomatch_bias: NoMatchBias::PerMatch,
            freeze_word_vectors: false,
        }
    }
}

impl ModelConfig {
    pub fn sentence_dim(&self) -> usize {
        2 * self.sentence_hidden
    }

    /// Width of the context-recurrence input for `slots` slot types:
    /// user ∥ slot flags ∥ previous action ∥ `e_s` ∥ `e_u` ∥ API features.
    pub fn feature_dim(&self, slots: usize) -> usize {
        4 * self.sentence_dim() + slots + self.api_dim
    }
}
