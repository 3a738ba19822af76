//! Replacement of speaker-named query arguments by reserved speaker tokens.

use super::edit::{EditBuilder, EditedText};
use super::types::{char_slice, DialogueExample};

pub const DEFAULT_SPEAKER_CAP: usize = 9;

/// Reserved surface form for the speaker with 1-based `index`.
pub fn speaker_token(index: usize) -> String {
    format!("[S{index}]")
}

/// Result of [`substitute_speaker_tokens`].
#[derive(Debug, Clone)]
pub struct SpeakerSubstitution {
    pub example: DialogueExample,
    /// Number of in-utterance mentions that were replaced.
    pub replacements: usize,
}

/// Speaker ids in order of first appearance; position + 1 is the speaker index.
pub fn speaker_order(ex: &DialogueExample) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for turn in &ex.turns {
        if !order.contains(&turn.speaker) {
            order.push(turn.speaker.clone());
        }
    }
    order
}

/// Rewrites the query arguments that name a speaker.
///
/// Mentions inside utterances are matched as whole words (exact string,
/// case-sensitive). Turn speaker ids of those speakers and the subject/object
/// fields are rewritten too. Arguments that are not speakers, and speakers
/// beyond `cap`, are left verbatim.
pub fn substitute_speaker_tokens(ex: &DialogueExample, cap: usize) -> SpeakerSubstitution {
    let order = speaker_order(ex);
    let token_for = |arg: &str| {
        order
            .iter()
            .position(|s| s == arg)
            .map(|i| i + 1)
            .filter(|&i| i <= cap)
            .map(speaker_token)
    };

    let mut targets: Vec<(String, String)> = Vec::new();
    for arg in [&ex.subject, &ex.object] {
        if let Some(tok) = token_for(arg) {
            if !targets.iter().any(|(s, _)| s == arg) {
                targets.push((arg.clone(), tok));
            }
        }
    }
    if targets.is_empty() {
        return SpeakerSubstitution {
            example: ex.clone(),
            replacements: 0,
        };
    }
    // longest surface first so "Speaker 10" wins over "Speaker 1"
    targets.sort_by_key(|t| std::cmp::Reverse(t.0.chars().count()));

    let mut out = ex.clone();
    let mut replacements = 0;
    let mut edits = Vec::with_capacity(ex.turns.len());
    for turn in out.turns.iter_mut() {
        let (edited, n) = replace_mentions(&turn.utterance, &targets);
        replacements += n;
        if let Some((_, tok)) = targets.iter().find(|(s, _)| *s == turn.speaker) {
            turn.speaker = tok.clone();
        }
        turn.utterance = edited.text().to_string();
        edits.push(edited);
    }
    for arg in [&mut out.subject, &mut out.object] {
        if let Some((_, tok)) = targets.iter().find(|(s, _)| s == arg) {
            *arg = tok.clone();
        }
    }
    if let Some(spans) = out.trigger_char_spans.as_mut() {
        spans.retain_mut(|span| {
            let Some(mapped) = edits[span.turn].map_span(span.start..span.end) else {
                return false;
            };
            span.start = mapped.start;
            span.end = mapped.end;
            span.text =
                char_slice(&out.turns[span.turn].utterance, mapped.start, mapped.end).to_string();
            true
        });
    }
    SpeakerSubstitution {
        example: out,
        replacements,
    }
}

fn replace_mentions(text: &str, targets: &[(String, String)]) -> (EditedText, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut builder = EditBuilder::default();
    let mut count = 0;
    let mut kept = String::new();
    let mut i = 0;
    'scan: while i < chars.len() {
        let boundary_before = i == 0 || !chars[i - 1].is_alphanumeric();
        if boundary_before {
            for (surface, token) in targets {
                let pat: Vec<char> = surface.chars().collect();
                let end = i + pat.len();
                if pat.is_empty() || end > chars.len() || chars[i..end] != pat[..] {
                    continue;
                }
                let boundary_after = end == chars.len() || !chars[end].is_alphanumeric();
                if boundary_after {
                    builder.keep(&kept);
                    kept.clear();
                    builder.replace(surface, token);
                    count += 1;
                    i = end;
                    continue 'scan;
                }
            }
        }
        kept.push(chars[i]);
        i += 1;
    }
    builder.keep(&kept);
    (builder.finish(), count)
}
