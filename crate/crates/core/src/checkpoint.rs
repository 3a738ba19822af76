//! Checkpoint directories: manifest, parameters, vocabulary and ontology.
//!
//! ```text
//! manifest.json       format, backbone, hashes, provenance, config snapshot
//! model.safetensors   every parameter by canonical name
//! vocab.txt           id-ordered vocabulary
//! ontology.toml       relation labels the head predicts
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SubwordTokenizer;
use crate::encoder::{Backbone, EncoderConfig};
use crate::error::{Result, TrendError};
use crate::evaluation::RelationOntology;
use crate::model::{pad_id, TrendModel};
use crate::params::ParamStore;

pub const FORMAT: &str = "trend-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "model.safetensors";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const ONTOLOGY_FILE: &str = "ontology.toml";

const PAYLOAD_FILES: [&str; 3] = [PARAMS_FILE, VOCAB_FILE, ONTOLOGY_FILE];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub backbone: Backbone,
    pub encoder: EncoderConfig,
    pub hidden_size: usize,
    pub num_relations: usize,
    pub max_span_len: usize,
    /// Maximum instance length used when building inputs.
    pub max_len: usize,
    pub lowercase: bool,
    pub speaker_cap: usize,
    pub vocab_hash: String,
    pub ontology_name: String,
    pub ontology_hash: String,
    /// Hash of the checkpoint this one was transferred from.
    pub source_checkpoint: Option<String>,
    pub seed: u64,
    /// Settings the checkpoint was produced with.
    pub config: serde_json::Value,
    /// SHA-256 of every other file in the directory.
    pub files: BTreeMap<String, String>,
}

/// A trained model with everything needed to run it.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub model: TrendModel,
    pub tokenizer: SubwordTokenizer,
    pub ontology: RelationOntology,
}

/// Inputs that describe a checkpoint beyond the model itself.
#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub max_len: usize,
    pub source_checkpoint: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path)
        .map_err(|e| TrendError::Checkpoint(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| TrendError::io(path, e))
}

/// Identity of a checkpoint directory: SHA-256 over the names and contents
/// of its files.
pub fn checkpoint_hash(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in std::iter::once(MANIFEST_FILE).chain(PAYLOAD_FILES) {
        hasher.update(name.as_bytes());
        hasher.update(b"\0");
        hasher.update(sha256_hex(&read(&dir.join(name))?).as_bytes());
        hasher.update(b"\n");
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Checkpoint {
    pub fn new(
        model: TrendModel,
        tokenizer: SubwordTokenizer,
        ontology: RelationOntology,
        info: CheckpointInfo,
    ) -> Result<Self> {
        if ontology.len() != model.num_relations {
            return Err(TrendError::Ontology(format!(
                "ontology {} has {} labels but the relation head has {} outputs",
                ontology.name,
                ontology.len(),
                model.num_relations
            )));
        }
        if tokenizer.vocab_size() != model.encoder.vocab_size {
            return Err(TrendError::Checkpoint(format!(
                "vocabulary has {} entries but the encoder expects {}",
                tokenizer.vocab_size(),
                model.encoder.vocab_size
            )));
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            backbone: model.backbone,
            encoder: model.encoder.clone(),
            hidden_size: model.hidden_size(),
            num_relations: model.num_relations,
            max_span_len: model.max_span_len,
            max_len: info.max_len,
            lowercase: tokenizer.lowercase(),
            speaker_cap: tokenizer.speaker_cap(),
            vocab_hash: tokenizer.vocab_hash(),
            ontology_name: ontology.name.clone(),
            ontology_hash: ontology.hash(),
            source_checkpoint: info.source_checkpoint,
            seed: info.seed,
            config: info.config,
            files: BTreeMap::new(),
        };
        Ok(Checkpoint {
            manifest,
            model,
            tokenizer,
            ontology,
        })
    }

    /// Writes the directory and returns its [`checkpoint_hash`].
    pub fn save(&self, dir: &Path) -> Result<String> {
        std::fs::create_dir_all(dir).map_err(|e| TrendError::io(dir, e))?;
        self.model.store.save(&dir.join(PARAMS_FILE))?;
        self.tokenizer.save_vocab(&dir.join(VOCAB_FILE))?;
        write(
            &dir.join(ONTOLOGY_FILE),
            self.ontology.to_toml_string().as_bytes(),
        )?;
        let mut manifest = self.manifest.clone();
        manifest.files = PAYLOAD_FILES
            .iter()
            .map(|f| Ok((f.to_string(), sha256_hex(&read(&dir.join(f))?))))
            .collect::<Result<_>>()?;
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        write(&dir.join(MANIFEST_FILE), text.as_bytes())?;
        checkpoint_hash(dir)
    }

    /// Reads and verifies a checkpoint directory. Every failure is reported
    /// as a checkpoint error.
    pub fn load(dir: &Path) -> Result<Self> {
        Self::load_inner(dir).map_err(|e| match e {
            TrendError::Checkpoint(_) => e,
            other => TrendError::Checkpoint(format!("{}: {other}", dir.display())),
        })
    }

    fn load_inner(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_slice(&read(&dir.join(MANIFEST_FILE))?)
            .map_err(|e| TrendError::Checkpoint(format!("malformed manifest: {e}")))?;
        if manifest.format != FORMAT || manifest.format_version != FORMAT_VERSION {
            return Err(TrendError::Checkpoint(format!(
                "unsupported format {} v{}",
                manifest.format, manifest.format_version
            )));
        }
        for f in PAYLOAD_FILES {
            let expected = manifest
                .files
                .get(f)
                .ok_or_else(|| TrendError::Checkpoint(format!("manifest lists no hash for {f}")))?;
            if sha256_hex(&read(&dir.join(f))?) != *expected {
                return Err(TrendError::Checkpoint(format!(
                    "{f} does not match its recorded hash"
                )));
            }
        }
        let tokenizer = SubwordTokenizer::from_vocab_file(
            &dir.join(VOCAB_FILE),
            manifest.lowercase,
            manifest.speaker_cap,
        )?;
        if tokenizer.vocab_hash() != manifest.vocab_hash {
            return Err(TrendError::Checkpoint("vocabulary hash mismatch".into()));
        }
        let text = String::from_utf8(read(&dir.join(ONTOLOGY_FILE))?)
            .map_err(|e| TrendError::Checkpoint(format!("{ONTOLOGY_FILE}: {e}")))?;
        let ontology = RelationOntology::from_toml_str(&text)?;
        if ontology.hash() != manifest.ontology_hash || ontology.len() != manifest.num_relations {
            return Err(TrendError::Checkpoint(
                "ontology does not match the manifest".into(),
            ));
        }
        let store = ParamStore::load(&dir.join(PARAMS_FILE), DType::F32, &Device::Cpu)?;
        let model = TrendModel::from_store(
            store,
            manifest.encoder.clone(),
            manifest.backbone,
            manifest.max_span_len,
            pad_id(&tokenizer),
        )?;
        if model.num_relations != manifest.num_relations {
            return Err(TrendError::Checkpoint(format!(
                "relation head has {} outputs, manifest says {}",
                model.num_relations, manifest.num_relations
            )));
        }
        Ok(Checkpoint {
            manifest,
            model,
            tokenizer,
            ontology,
        })
    }
}
