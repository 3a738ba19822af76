//! Corpus loading, normalization and conversion into encoder-ready instances.

mod adapters;
mod cache;
mod edit;
mod instance;
mod normalize;
mod speakers;
mod tokenizer;
mod types;

pub use adapters::{load_corpus, AdapterConfig, CorpusFormat, FieldNames};
pub use cache::{read_instance_cache, write_instance_cache, CACHE_FORMAT, CACHE_VERSION};
pub use edit::EditedText;
pub use instance::InstanceBuilder;
pub use normalize::{lemmatize, normalize_text, normalize_with_alignment};
pub use speakers::{
    speaker_order, speaker_token, substitute_speaker_tokens, SpeakerSubstitution,
    DEFAULT_SPEAKER_CAP,
};
pub use tokenizer::{Piece, SubwordTokenizer, CLS, MASK, PAD, SEP, UNK};
pub use types::{
    char_slice, ContextLevel, DatasetTag, DialogueExample, TokenOffset, TokenizedInstance,
    TriggerCharSpan, TriggerSpan, Turn,
};

use crate::error::Result;

/// Normalizes utterances, carries trigger spans through the rewrite and then
/// substitutes speaker tokens.
///
/// A trigger whose text normalizes away entirely is dropped. Query arguments
/// that name a speaker are kept verbatim until substitution; other arguments
/// are normalized like the dialogue so they keep matching it.
pub fn prepare_example(
    ex: &DialogueExample,
    speaker_cap: usize,
    require_labels: bool,
) -> Result<DialogueExample> {
    ex.validate(require_labels)?;
    let speakers = speaker_order(ex);
    let mut out = ex.clone();
    let mut edits = Vec::with_capacity(ex.turns.len());
    for turn in out.turns.iter_mut() {
        let edited = normalize_with_alignment(&turn.utterance);
        turn.utterance = edited.text().to_string();
        edits.push(edited);
    }
    if let Some(spans) = out.trigger_char_spans.as_mut() {
        spans.retain_mut(
            |span| match edits[span.turn].map_span(span.start..span.end) {
                Some(mapped) => {
                    span.start = mapped.start;
                    span.end = mapped.end;
                    span.text =
                        char_slice(edits[span.turn].text(), mapped.start, mapped.end).to_string();
                    true
                }
                None => false,
            },
        );
    }
    for arg in [&mut out.subject, &mut out.object] {
        if !speakers.contains(arg) {
            *arg = normalize_text(arg);
        }
    }
    let out = substitute_speaker_tokens(&out, speaker_cap).example;
    out.validate(require_labels)?;
    Ok(out)
}

/// Splits every multi-label example into single-label copies, in order.
///
/// Triggers tagged with a relation follow only the copy for that relation;
/// untagged triggers follow every copy. Unlabeled examples pass through.
pub fn duplicate_multilabel(examples: &[DialogueExample]) -> Vec<DialogueExample> {
    let total: usize = examples.iter().map(|e| e.relations.len().max(1)).sum();
    let mut out = Vec::with_capacity(total);
    for ex in examples {
        if ex.relations.len() <= 1 {
            out.push(ex.clone());
            continue;
        }
        for relation in &ex.relations {
            let mut copy = ex.clone();
            copy.relations = vec![relation.clone()];
            if let Some(spans) = copy.trigger_char_spans.as_mut() {
                spans.retain(|s| s.relation.as_ref().is_none_or(|r| r == relation));
            }
            out.push(copy);
        }
    }
    out
}

/// Prepares every example and splits multi-label ones.
pub fn prepare_corpus(
    examples: &[DialogueExample],
    speaker_cap: usize,
    require_labels: bool,
) -> Result<Vec<DialogueExample>> {
    let prepared = examples
        .iter()
        .map(|ex| prepare_example(ex, speaker_cap, require_labels))
        .collect::<Result<Vec<_>>>()?;
    Ok(duplicate_multilabel(&prepared))
}

/// Every string the encoder will see for `examples`, for vocabulary building.
pub fn corpus_texts(examples: &[DialogueExample]) -> Vec<String> {
    let mut out = Vec::new();
    for ex in examples {
        out.extend(
            ex.turns
                .iter()
                .map(|t| format!("{}: {}", t.speaker, t.utterance)),
        );
        out.push(ex.subject.clone());
        out.push(ex.object.clone());
    }
    out
}
