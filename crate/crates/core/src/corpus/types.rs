use serde::{Deserialize, Serialize};

use crate::error::{Result, TrendError};

/// Whether a corpus carries gold trigger annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetTag {
    TriggerAnnotated,
    TriggerFree,
}

/// Partial dialogue window (session) or the full dialogue of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextLevel {
    #[default]
    Session,
    Pair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub utterance: String,
}

impl Turn {
    pub fn new(speaker: impl Into<String>, utterance: impl Into<String>) -> Self {
        Turn {
            speaker: speaker.into(),
            utterance: utterance.into(),
        }
    }
}

/// A gold trigger located inside one turn, in character (not byte) offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerCharSpan {
    pub turn: usize,
    pub start: usize,
    pub end: usize,
    pub text: String,
    /// Relation this trigger evidences; `None` means it applies to every label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
}

/// One dialogue plus one queried entity pair and its gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueExample {
    /// Identifier of the (dialogue, pair) query; shared by duplicated copies.
    pub id: String,
    pub turns: Vec<Turn>,
    pub subject: String,
    pub object: String,
    pub relations: Vec<String>,
    pub trigger_char_spans: Option<Vec<TriggerCharSpan>>,
    pub dataset_tag: DatasetTag,
    pub context_level: ContextLevel,
}

impl DialogueExample {
    /// Checks the structural invariants. `require_labels` is false only for
    /// unlabeled prediction inputs.
    pub fn validate(&self, require_labels: bool) -> Result<()> {
        if self.turns.is_empty() {
            return Err(TrendError::InvalidInput(format!(
                "example {} has no turns",
                self.id
            )));
        }
        if let Some(i) = self
            .turns
            .iter()
            .position(|t| t.utterance.trim().is_empty())
        {
            return Err(TrendError::InvalidInput(format!(
                "example {} has an empty utterance at turn {i}",
                self.id
            )));
        }
        if require_labels && self.relations.is_empty() {
            return Err(TrendError::InvalidInput(format!(
                "example {} has no relation label",
                self.id
            )));
        }
        for span in self.trigger_char_spans.iter().flatten() {
            let turn = self.turns.get(span.turn).ok_or_else(|| {
                TrendError::InvalidInput(format!(
                    "example {}: trigger references missing turn {}",
                    self.id, span.turn
                ))
            })?;
            let len = turn.utterance.chars().count();
            if span.start >= span.end || span.end > len {
                return Err(TrendError::InvalidInput(format!(
                    "example {}: trigger span {}..{} out of range for turn {} (length {len})",
                    self.id, span.start, span.end, span.turn
                )));
            }
            let found = char_slice(&turn.utterance, span.start, span.end);
            if found != span.text {
                return Err(TrendError::InvalidInput(format!(
                    "example {}: trigger text {:?} does not match {:?} at {}..{}",
                    self.id, span.text, found, span.start, span.end
                )));
            }
        }
        Ok(())
    }

    pub fn has_trigger_annotations(&self) -> bool {
        self.trigger_char_spans
            .as_ref()
            .is_some_and(|spans| !spans.is_empty())
    }
}

/// Substring of `text` by character indices.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(i, _)| i).chain([text.len()]);
    let from = indices.nth(start).unwrap_or(text.len());
    let to = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        from
    };
    &text[from..to]
}

/// Inclusive token span; the empty span uses the `-1` sentinel on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriggerSpan {
    pub exists: bool,
    pub start: i64,
    pub end: i64,
}

impl TriggerSpan {
    pub const EMPTY: TriggerSpan = TriggerSpan {
        exists: false,
        start: -1,
        end: -1,
    };

    pub fn new(start: usize, end: usize) -> Self {
        assert!(start <= end, "trigger span start {start} > end {end}");
        TriggerSpan {
            exists: true,
            start: start as i64,
            end: end as i64,
        }
    }

    /// Token positions covered by the span (empty when the span is empty).
    pub fn positions(&self) -> std::ops::Range<usize> {
        if self.exists {
            self.start as usize..self.end as usize + 1
        } else {
            0..0
        }
    }

    pub fn is_valid(&self) -> bool {
        if self.exists {
            0 <= self.start && self.start <= self.end
        } else {
            self.start == -1 && self.end == -1
        }
    }
}

impl Default for TriggerSpan {
    fn default() -> Self {
        TriggerSpan::EMPTY
    }
}

/// Where a token came from in the source dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TokenOffset {
    /// `[CLS]`, `[SEP]`, or a query token outside the dialogue.
    Special,
    /// Part of the speaker prefix of a turn.
    Speaker { turn: usize },
    /// Characters `start..end` of the utterance of `turn`.
    Text {
        turn: usize,
        start: usize,
        end: usize,
    },
}

/// Encoder-ready sequence `[CLS] D [SEP] s [CLS] o` with alignment metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedInstance {
    pub id: String,
    pub token_ids: Vec<u32>,
    pub tokens: Vec<String>,
    pub offset_map: Vec<TokenOffset>,
    pub cls1_pos: usize,
    pub sep_pos: usize,
    pub cls2_pos: usize,
    pub dialogue_mask: Vec<bool>,
    pub gold_trigger: TriggerSpan,
    /// Every aligned gold trigger, in dialogue order; accepted answers for exact match.
    pub trigger_alternatives: Vec<TriggerSpan>,
    pub gate_label: bool,
    /// Index into the active ontology; `None` for unlabeled prediction inputs.
    pub relation_label: Option<usize>,
    pub dataset_tag: DatasetTag,
    /// Number of leading turns dropped by truncation.
    pub dropped_turns: usize,
}

impl TokenizedInstance {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Checks every structural invariant of the instance.
    pub fn check_invariants(&self, max_len: usize) -> Result<()> {
        let fail = |msg: String| {
            Err(TrendError::InvalidInput(format!(
                "instance {}: {msg}",
                self.id
            )))
        };
        let n = self.token_ids.len();
        if self.tokens.len() != n || self.offset_map.len() != n || self.dialogue_mask.len() != n {
            return fail("parallel arrays differ in length".into());
        }
        if n > max_len {
            return fail(format!("length {n} exceeds maximum {max_len}"));
        }
        if !(self.cls1_pos == 0
            && self.cls1_pos < self.sep_pos
            && self.sep_pos < self.cls2_pos
            && self.cls2_pos < n)
        {
            return fail(format!(
                "bad special positions cls1={} sep={} cls2={}",
                self.cls1_pos, self.sep_pos, self.cls2_pos
            ));
        }
        for (i, &m) in self.dialogue_mask.iter().enumerate() {
            let inside = self.cls1_pos < i && i < self.sep_pos;
            if m != inside {
                return fail(format!("dialogue mask wrong at {i}"));
            }
        }
        if !self.gold_trigger.is_valid() {
            return fail("gold trigger violates span invariants".into());
        }
        if self.gate_label != self.gold_trigger.exists {
            return fail("gate label disagrees with gold trigger".into());
        }
        for span in std::iter::once(&self.gold_trigger).chain(&self.trigger_alternatives) {
            if span.exists {
                let (s, e) = (span.start as usize, span.end as usize);
                if e >= n || !self.dialogue_mask[s] || !self.dialogue_mask[e] {
                    return fail(format!("trigger span {s}..={e} leaves the dialogue region"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_handles_multibyte() {
        let s = "héllo wörld";
        assert_eq!(char_slice(s, 0, 5), "héllo");
        assert_eq!(char_slice(s, 6, 11), "wörld");
        assert_eq!(char_slice(s, 3, 3), "");
    }

    #[test]
    fn empty_span_uses_sentinel() {
        assert!(TriggerSpan::EMPTY.is_valid());
        assert_eq!(TriggerSpan::EMPTY.positions(), 0..0);
        assert!(TriggerSpan::new(2, 4).is_valid());
        assert_eq!(TriggerSpan::new(2, 4).positions(), 2..5);
        let bad = TriggerSpan {
            exists: false,
            start: 0,
            end: 0,
        };
        assert!(!bad.is_valid());
    }

    #[test]
    fn validate_rejects_bad_examples() {
        let mut ex = DialogueExample {
            id: "x".into(),
            turns: vec![Turn::new("Speaker 1", "hi there")],
            subject: "Speaker 1".into(),
            object: "Speaker 2".into(),
            relations: vec!["per:friends".into()],
            trigger_char_spans: Some(vec![TriggerCharSpan {
                turn: 0,
                start: 3,
                end: 8,
                text: "there".into(),
                relation: None,
            }]),
            dataset_tag: DatasetTag::TriggerAnnotated,
            context_level: ContextLevel::Session,
        };
        ex.validate(true).unwrap();

        ex.trigger_char_spans.as_mut().unwrap()[0].text = "thing".into();
        assert!(ex.validate(true).is_err());

        ex.trigger_char_spans = None;
        ex.relations.clear();
        assert!(ex.validate(true).is_err());
        assert!(ex.validate(false).is_ok());

        ex.turns[0].utterance = "   ".into();
        assert!(ex.validate(false).is_err());
    }
}
