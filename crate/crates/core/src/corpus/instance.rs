//! Construction of `[CLS] D [SEP] s [CLS] o` instances.

use super::tokenizer::{Piece, SubwordTokenizer, CLS, SEP};
use super::types::{DialogueExample, TokenOffset, TokenizedInstance, TriggerSpan};
use crate::error::{Result, TrendError};
use crate::evaluation::RelationOntology;

/// Tokenizes examples for one encoder/ontology pairing.
#[derive(Debug, Clone, Copy)]
pub struct InstanceBuilder<'a> {
    pub tokenizer: &'a SubwordTokenizer,
    pub ontology: &'a RelationOntology,
    pub max_len: usize,
}

struct TurnTokens {
    ids: Vec<u32>,
    tokens: Vec<String>,
    offsets: Vec<TokenOffset>,
}

impl<'a> InstanceBuilder<'a> {
    pub fn new(
        tokenizer: &'a SubwordTokenizer,
        ontology: &'a RelationOntology,
        max_len: usize,
    ) -> Self {
        InstanceBuilder {
            tokenizer,
            ontology,
            max_len,
        }
    }

    pub fn build_all(&self, examples: &[DialogueExample]) -> Result<Vec<TokenizedInstance>> {
        examples.iter().map(|ex| self.build(ex)).collect()
    }

    /// Builds one instance from a single-label (or unlabeled) example.
    ///
    /// When the sequence is too long, whole turns are dropped from the front
    /// (and, if the last turn alone is too long, its leading tokens); the
    /// query suffix is always kept. A gold trigger survives only if it lies
    /// entirely in the retained dialogue.
    pub fn build(&self, ex: &DialogueExample) -> Result<TokenizedInstance> {
        if ex.relations.len() > 1 {
            return Err(TrendError::InvalidInput(format!(
                "example {} has {} labels; duplicate multi-label examples first",
                ex.id,
                ex.relations.len()
            )));
        }
        let relation_label = match ex.relations.first() {
            Some(label) => Some(self.ontology.index_of(label).ok_or_else(|| {
                TrendError::Ontology(format!(
                    "label {label:?} of example {} is not in ontology {}",
                    ex.id, self.ontology.name
                ))
            })?),
            None => None,
        };

        let subject = self.tokenizer.tokenize(&ex.subject)?;
        let object = self.tokenizer.tokenize(&ex.object)?;
        if subject.is_empty() || object.is_empty() {
            return Err(TrendError::InvalidInput(format!(
                "example {}: query argument tokenizes to nothing (subject {:?}, object {:?})",
                ex.id, ex.subject, ex.object
            )));
        }

        let turns = ex
            .turns
            .iter()
            .enumerate()
            .map(|(i, turn)| self.tokenize_turn(i, &turn.speaker, &turn.utterance))
            .collect::<Result<Vec<_>>>()?;

        let fixed = 3 + subject.len() + object.len();
        if fixed >= self.max_len {
            return Err(TrendError::InvalidInput(format!(
                "example {}: query needs {fixed} tokens, leaving no room for dialogue within {}",
                ex.id, self.max_len
            )));
        }
        let budget = self.max_len - fixed;

        // keep the most recent turns that fit
        let mut first_kept = turns.len();
        let mut used = 0;
        while first_kept > 0 && used + turns[first_kept - 1].ids.len() <= budget {
            first_kept -= 1;
            used += turns[first_kept].ids.len();
        }
        let mut partial_skip = 0;
        if first_kept == turns.len() {
            // even the last turn is too long: keep its tail
            first_kept = turns.len() - 1;
            partial_skip = turns[first_kept].ids.len() - budget;
        }

        let cls = self.tokenizer.special_id(CLS);
        let sep = self.tokenizer.special_id(SEP);
        let mut ids = vec![cls];
        let mut tokens = vec![CLS.to_string()];
        let mut offsets = vec![TokenOffset::Special];
        for (k, turn) in turns.iter().enumerate().skip(first_kept) {
            let skip = if k == first_kept { partial_skip } else { 0 };
            ids.extend_from_slice(&turn.ids[skip..]);
            tokens.extend_from_slice(&turn.tokens[skip..]);
            offsets.extend_from_slice(&turn.offsets[skip..]);
        }
        let sep_pos = ids.len();
        ids.push(sep);
        tokens.push(SEP.to_string());
        offsets.push(TokenOffset::Special);
        push_pieces(&subject, &mut ids, &mut tokens, &mut offsets);
        let cls2_pos = ids.len();
        ids.push(cls);
        tokens.push(CLS.to_string());
        offsets.push(TokenOffset::Special);
        push_pieces(&object, &mut ids, &mut tokens, &mut offsets);

        let dialogue_mask: Vec<bool> = (0..ids.len()).map(|i| 0 < i && i < sep_pos).collect();

        let mut spans: Vec<_> = ex.trigger_char_spans.iter().flatten().collect();
        spans.sort_by_key(|s| (s.turn, s.start, s.end));
        let mut alternatives: Vec<TriggerSpan> = Vec::new();
        for span in spans {
            if let Some(aligned) = align_span(&offsets, sep_pos, span.turn, span.start, span.end) {
                if !alternatives.contains(&aligned) {
                    alternatives.push(aligned);
                }
            }
        }
        let gold_trigger = alternatives.first().copied().unwrap_or(TriggerSpan::EMPTY);

        Ok(TokenizedInstance {
            id: ex.id.clone(),
            token_ids: ids,
            tokens,
            offset_map: offsets,
            cls1_pos: 0,
            sep_pos,
            cls2_pos,
            dialogue_mask,
            gate_label: gold_trigger.exists,
            gold_trigger,
            trigger_alternatives: alternatives,
            relation_label,
            dataset_tag: ex.dataset_tag,
            dropped_turns: first_kept,
        })
    }

    fn tokenize_turn(&self, turn: usize, speaker: &str, utterance: &str) -> Result<TurnTokens> {
        let prefix = format!("{speaker}: ");
        let prefix_len = prefix.chars().count();
        let line = format!("{prefix}{utterance}");
        let pieces = self.tokenizer.tokenize(&line)?;
        let mut out = TurnTokens {
            ids: Vec::with_capacity(pieces.len()),
            tokens: Vec::with_capacity(pieces.len()),
            offsets: Vec::with_capacity(pieces.len()),
        };
        for p in pieces {
            let offset = if p.start < prefix_len {
                TokenOffset::Speaker { turn }
            } else {
                TokenOffset::Text {
                    turn,
                    start: p.start - prefix_len,
                    end: p.end - prefix_len,
                }
            };
            out.ids.push(p.id);
            out.tokens.push(p.token);
            out.offsets.push(offset);
        }
        Ok(out)
    }
}

fn push_pieces(
    pieces: &[Piece],
    ids: &mut Vec<u32>,
    tokens: &mut Vec<String>,
    offsets: &mut Vec<TokenOffset>,
) {
    for p in pieces {
        ids.push(p.id);
        tokens.push(p.token.clone());
        offsets.push(TokenOffset::Special);
    }
}

/// Token span covering chars `start..end` of `turn`, if fully retained.
fn align_span(
    offsets: &[TokenOffset],
    sep_pos: usize,
    turn: usize,
    start: usize,
    end: usize,
) -> Option<TriggerSpan> {
    let mut first_of_turn: Option<usize> = None;
    let mut covered: Option<(usize, usize)> = None;
    for (i, off) in offsets.iter().enumerate().take(sep_pos).skip(1) {
        if let TokenOffset::Text {
            turn: t,
            start: s,
            end: e,
        } = *off
        {
            if t != turn {
                continue;
            }
            first_of_turn.get_or_insert(s);
            if s < end && start < e {
                covered = Some(match covered {
                    Some((a, _)) => (a, i),
                    None => (i, i),
                });
            }
        }
    }
    let first_char = first_of_turn?;
    // the turn was cut in front of the trigger
    if first_char > start {
        return None;
    }
    covered.map(|(a, b)| TriggerSpan::new(a, b))
}
