use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrendError};

/// Backbone size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Randomly initialized 2-layer encoder for desk-scale runs.
    #[default]
    Tiny,
    Base,
    Large,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Tiny => "tiny",
            Backbone::Base => "base",
            Backbone::Large => "large",
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = TrendError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(Backbone::Tiny),
            "base" => Ok(Backbone::Base),
            "large" => Ok(Backbone::Large),
            other => Err(TrendError::Config(format!(
                "unknown backbone {other:?} (tiny, base, large)"
            ))),
        }
    }
}

/// Transformer dimensions and regularization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub intermediate_size: usize,
    pub max_position: usize,
    pub type_vocab_size: usize,
    pub layer_norm_eps: f64,
    pub hidden_dropout: f64,
    pub attention_dropout: f64,
    pub initializer_range: f64,
}

impl EncoderConfig {
    /// d=16, 2 layers, 2 heads.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_size: 16,
            num_layers: 2,
            num_heads: 2,
            intermediate_size: 64,
            max_position: 512,
            type_vocab_size: 2,
            layer_norm_eps: 1e-12,
            hidden_dropout: 0.0,
            attention_dropout: 0.0,
            initializer_range: 0.02,
        }
    }

    /// Reads a BERT `config.json`.
    pub fn from_bert_json(path: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            vocab_size: usize,
            hidden_size: usize,
            num_hidden_layers: usize,
            num_attention_heads: usize,
            intermediate_size: usize,
            max_position_embeddings: usize,
            #[serde(default = "two")]
            type_vocab_size: usize,
            #[serde(default = "eps")]
            layer_norm_eps: f64,
            #[serde(default = "drop")]
            hidden_dropout_prob: f64,
            #[serde(default = "drop")]
            attention_probs_dropout_prob: f64,
            #[serde(default = "range")]
            initializer_range: f64,
            #[serde(default)]
            hidden_act: Option<String>,
        }
        fn two() -> usize {
            2
        }
        fn eps() -> f64 {
            1e-12
        }
        fn drop() -> f64 {
            0.1
        }
        fn range() -> f64 {
            0.02
        }
        let text = std::fs::read_to_string(path).map_err(|e| TrendError::io(path, e))?;
        let raw: Raw = serde_json::from_str(&text)
            .map_err(|e| TrendError::Checkpoint(format!("{}: {e}", path.display())))?;
        if let Some(act) = raw.hidden_act.as_deref() {
            if act != "gelu" {
                return Err(TrendError::Checkpoint(format!(
                    "unsupported activation {act:?}"
                )));
            }
        }
        let cfg = EncoderConfig {
            vocab_size: raw.vocab_size,
            hidden_size: raw.hidden_size,
            num_layers: raw.num_hidden_layers,
            num_heads: raw.num_attention_heads,
            intermediate_size: raw.intermediate_size,
            max_position: raw.max_position_embeddings,
            type_vocab_size: raw.type_vocab_size,
            layer_norm_eps: raw.layer_norm_eps,
            hidden_dropout: raw.hidden_dropout_prob,
            attention_dropout: raw.attention_probs_dropout_prob,
            initializer_range: raw.initializer_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0
            || self.num_heads == 0
            || !self.hidden_size.is_multiple_of(self.num_heads)
        {
            return Err(TrendError::Config(format!(
                "hidden size {} is not divisible into {} heads",
                self.hidden_size, self.num_heads
            )));
        }
        if self.type_vocab_size < 2 {
            return Err(TrendError::Config("encoder needs two token types".into()));
        }
        for p in [self.hidden_dropout, self.attention_dropout] {
            if !(0.0..1.0).contains(&p) {
                return Err(TrendError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }
}
