use std::path::Path;

use candle_core::{DType, Device};

use super::{check_parameters, EncoderConfig, PREFIX};
use crate::corpus::SubwordTokenizer;
use crate::error::{Result, TrendError};
use crate::params::ParamStore;

/// A pretrained encoder: weights, dimensions and its tokenizer.
#[derive(Debug)]
pub struct Pretrained {
    pub store: ParamStore,
    pub config: EncoderConfig,
    pub tokenizer: SubwordTokenizer,
}

/// Maps a BERT tensor name onto the local naming scheme; `None` for tensors
/// the encoder does not use (pooler, pretraining heads).
fn local_name(name: &str) -> Option<String> {
    let name = name.strip_prefix("bert.").unwrap_or(name);
    if !(name.starts_with("embeddings.") || name.starts_with("encoder.layer."))
        || name.contains("position_ids")
    {
        return None;
    }
    let name = name
        .replace("LayerNorm.gamma", "LayerNorm.weight")
        .replace("LayerNorm.beta", "LayerNorm.bias");
    Some(format!("{PREFIX}{name}"))
}

/// Loads `config.json`, `vocab.txt` and `model.safetensors` from `dir`.
pub fn load_pretrained(
    dir: &Path,
    lowercase: bool,
    speaker_cap: usize,
    dtype: DType,
    device: &Device,
) -> Result<Pretrained> {
    let config = EncoderConfig::from_bert_json(&dir.join("config.json"))?;
    let tokenizer =
        SubwordTokenizer::from_vocab_file(&dir.join("vocab.txt"), lowercase, speaker_cap)?;
    if tokenizer.vocab_size() != config.vocab_size {
        return Err(TrendError::Checkpoint(format!(
            "vocab.txt has {} entries but config.json declares {}",
            tokenizer.vocab_size(),
            config.vocab_size
        )));
    }
    let weights = dir.join("model.safetensors");
    let tensors = candle_core::safetensors::load(&weights, device)
        .map_err(|e| TrendError::Checkpoint(format!("reading {}: {e}", weights.display())))?;
    let mut names: Vec<_> = tensors.keys().cloned().collect();
    names.sort();
    let mut store = ParamStore::new(dtype, device.clone());
    for name in names {
        if let Some(local) = local_name(&name) {
            store.insert(&local, tensors[&name].clone())?;
        }
    }
    check_parameters(&store, &config)?;
    Ok(Pretrained {
        store,
        config,
        tokenizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bert_names_are_mapped() {
        assert_eq!(
            local_name("bert.encoder.layer.3.attention.output.LayerNorm.gamma").as_deref(),
            Some("encoder.encoder.layer.3.attention.output.LayerNorm.weight")
        );
        assert_eq!(
            local_name("embeddings.word_embeddings.weight").as_deref(),
            Some("encoder.embeddings.word_embeddings.weight")
        );
        assert_eq!(local_name("bert.pooler.dense.weight"), None);
        assert_eq!(local_name("cls.predictions.bias"), None);
        assert_eq!(local_name("bert.embeddings.position_ids"), None);
    }
}
