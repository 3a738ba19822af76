//! WordPiece tokenization with character offsets and reserved speaker tokens.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use sha2::{Digest, Sha256};
use tokenizers::models::wordpiece::WordPiece;
use tokenizers::normalizers::bert::BertNormalizer;
use tokenizers::pre_tokenizers::bert::BertPreTokenizer;
use tokenizers::{
    AddedToken, Normalizer, OffsetReferential, OffsetType, PreTokenizedString, PreTokenizer,
    Tokenizer,
};

use super::speakers::speaker_token;
use crate::error::{Result, TrendError};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

/// One subword piece with char offsets into the tokenized string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub id: u32,
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// BERT-style WordPiece tokenizer over a fixed vocabulary.
#[derive(Clone)]
pub struct SubwordTokenizer {
    inner: Tokenizer,
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    lowercase: bool,
    speaker_cap: usize,
}

impl std::fmt::Debug for SubwordTokenizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SubwordTokenizer")
            .field("vocab_size", &self.vocab.len())
            .field("lowercase", &self.lowercase)
            .field("speaker_cap", &self.speaker_cap)
            .finish()
    }
}

impl SubwordTokenizer {
    /// Builds a tokenizer from an id-ordered vocabulary.
    ///
    /// Speaker tokens `[S1]..[S{cap}]` must resolve to vocabulary entries: when
    /// missing they take over the matching `[unusedK]` slot of BERT vocabularies.
    pub fn from_vocab(mut vocab: Vec<String>, lowercase: bool, speaker_cap: usize) -> Result<Self> {
        for k in 1..=speaker_cap {
            let tok = speaker_token(k);
            if vocab.contains(&tok) {
                continue;
            }
            let unused = format!("[unused{k}]");
            match vocab.iter().position(|t| *t == unused) {
                Some(slot) => vocab[slot] = tok,
                None => {
                    return Err(TrendError::Tokenizer(format!(
                        "vocabulary has neither {tok} nor {unused}"
                    )))
                }
            }
        }
        for required in [PAD, UNK, CLS, SEP] {
            if !vocab.iter().any(|t| t == required) {
                return Err(TrendError::Tokenizer(format!(
                    "vocabulary lacks {required}"
                )));
            }
        }
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(TrendError::Tokenizer(format!(
                    "duplicate vocabulary entry {tok:?}"
                )));
            }
        }
        let model = WordPiece::builder()
            .vocab(
                index
                    .iter()
                    .map(|(k, v)| (k.clone(), *v))
                    .collect::<ahash::AHashMap<_, _>>(),
            )
            .unk_token(UNK.to_string())
            .continuing_subword_prefix("##".to_string())
            .max_input_chars_per_word(100)
            .build()
            .map_err(|e| TrendError::Tokenizer(e.to_string()))?;
        let mut inner = Tokenizer::new(model);
        inner
            .with_normalizer(Some(BertNormalizer::new(true, true, None, lowercase)))
            .map_err(|e| TrendError::Tokenizer(e.to_string()))?;
        inner.with_pre_tokenizer(Some(BertPreTokenizer));
        let specials: Vec<AddedToken> = (1..=speaker_cap)
            .map(|k| AddedToken::from(speaker_token(k), true))
            .collect();
        inner
            .add_special_tokens(specials)
            .map_err(|e| TrendError::Tokenizer(e.to_string()))?;
        Ok(SubwordTokenizer {
            inner,
            vocab,
            index,
            lowercase,
            speaker_cap,
        })
    }

    /// Reads a `vocab.txt` (one token per line, line number = id).
    pub fn from_vocab_file(path: &Path, lowercase: bool, speaker_cap: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrendError::io(path, e))?;
        let vocab = text.lines().map(str::to_string).collect();
        Self::from_vocab(vocab, lowercase, speaker_cap)
    }

    pub fn save_vocab(&self, path: &Path) -> Result<()> {
        let mut text = self.vocab.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| TrendError::io(path, e))
    }

    /// Builds a small vocabulary from texts: specials, speaker tokens, every
    /// observed character (bare and `##`-prefixed) and every observed word.
    pub fn build_vocab<'a>(
        texts: impl IntoIterator<Item = &'a str>,
        lowercase: bool,
        speaker_cap: usize,
    ) -> Result<Vec<String>> {
        let normalizer = BertNormalizer::new(true, true, None, lowercase);
        let mut words = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for c in ('a'..='z').chain('0'..='9') {
            chars.insert(c);
        }
        for c in "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~".chars() {
            chars.insert(c);
        }
        for text in texts {
            let mut pts = PreTokenizedString::from(text);
            pts.normalize(|n| normalizer.normalize(n))
                .and_then(|_| BertPreTokenizer.pre_tokenize(&mut pts))
                .map_err(|e| TrendError::Tokenizer(e.to_string()))?;
            for (word, _, _) in pts.get_splits(OffsetReferential::Normalized, OffsetType::Char) {
                chars.extend(word.chars());
                words.insert(word.to_string());
            }
        }
        let mut vocab: Vec<String> = [PAD, UNK, CLS, SEP, MASK]
            .iter()
            .map(|s| s.to_string())
            .collect();
        vocab.extend((1..=speaker_cap).map(speaker_token));
        let mut seen: BTreeSet<String> = vocab.iter().cloned().collect();
        let mut push = |tok: String, vocab: &mut Vec<String>| {
            if seen.insert(tok.clone()) {
                vocab.push(tok);
            }
        };
        for c in &chars {
            push(c.to_string(), &mut vocab);
            push(format!("##{c}"), &mut vocab);
        }
        for w in words {
            push(w, &mut vocab);
        }
        Ok(vocab)
    }

    /// Tokenizes `text`; offsets are char positions in `text`.
    pub fn tokenize(&self, text: &str) -> Result<Vec<Piece>> {
        let enc = self
            .inner
            .encode_char_offsets(text, false)
            .map_err(|e| TrendError::Tokenizer(e.to_string()))?;
        Ok(enc
            .get_ids()
            .iter()
            .zip(enc.get_tokens())
            .zip(enc.get_offsets())
            .map(|((&id, token), &(start, end))| Piece {
                id,
                token: token.clone(),
                start,
                end,
            })
            .collect())
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    pub fn special_id(&self, token: &str) -> u32 {
        self.index[token]
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    pub fn speaker_cap(&self) -> usize {
        self.speaker_cap
    }

    /// SHA-256 over the id-ordered vocabulary.
    pub fn vocab_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for tok in &self.vocab {
            hasher.update(tok.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}
