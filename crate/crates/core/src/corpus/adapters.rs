//! Readers that turn raw corpus files into [`DialogueExample`]s.
//!
//! Two layouts are supported:
//!
//! * trigger-annotated: a JSON array of `[turns, entries]` records, where each
//!   turn is a `"Speaker: text"` string and each entry names a query pair, its
//!   labels and (optionally) one trigger string per label;
//! * trigger-free: JSON lines, one record per session, with a list of
//!   `"Speaker: text"` turns, a label and session/pair identifiers.
//!
//! Field names are configurable per dataset through [`AdapterConfig`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::types::{ContextLevel, DatasetTag, DialogueExample, TriggerCharSpan, Turn};
use crate::error::{Result, TrendError};
use crate::evaluation::RelationOntology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    TriggerAnnotated,
    TriggerFree,
}

/// Raw field names of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldNames {
    pub subject: String,
    pub object: String,
    pub relations: String,
    pub triggers: String,
    pub context: String,
    pub label: String,
    pub session_id: String,
    pub pair_id: String,
}

impl Default for FieldNames {
    fn default() -> Self {
        FieldNames {
            subject: "x".into(),
            object: "y".into(),
            relations: "r".into(),
            triggers: "t".into(),
            context: "context".into(),
            label: "label".into(),
            session_id: "session-id".into(),
            pair_id: "pair-id".into(),
        }
    }
}

/// Per-dataset description of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterConfig {
    pub format: CorpusFormat,
    #[serde(default)]
    pub context_level: ContextLevel,
    #[serde(default)]
    pub fields: FieldNames,
    /// Separator between the speaker id and the utterance in a turn string.
    #[serde(default = "default_separator")]
    pub speaker_separator: String,
    /// Trigger-free corpora: labels are 1-based indices into the ontology.
    #[serde(default)]
    pub numeric_labels: bool,
    /// Trigger-free corpora: speaker ids of the queried pair.
    #[serde(default = "default_subject")]
    pub subject_value: String,
    #[serde(default = "default_object")]
    pub object_value: String,
}

fn default_separator() -> String {
    ": ".into()
}

fn default_subject() -> String {
    "A".into()
}

fn default_object() -> String {
    "B".into()
}

impl AdapterConfig {
    pub fn new(format: CorpusFormat) -> Self {
        AdapterConfig {
            format,
            context_level: ContextLevel::Session,
            fields: FieldNames::default(),
            speaker_separator: default_separator(),
            numeric_labels: false,
            subject_value: default_subject(),
            object_value: default_object(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrendError::io(path, e))?;
        toml::from_str(&text).map_err(|e| TrendError::Config(format!("{}: {e}", path.display())))
    }
}

/// Reads a corpus file. Labels are checked against `ontology`; unlabeled
/// records are allowed (prediction inputs).
pub fn load_corpus(
    path: &Path,
    cfg: &AdapterConfig,
    ontology: &RelationOntology,
) -> Result<Vec<DialogueExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| TrendError::io(path, e))?;
    let examples = match cfg.format {
        CorpusFormat::TriggerAnnotated => parse_trigger_annotated(&text, cfg),
        CorpusFormat::TriggerFree => parse_trigger_free(&text, cfg, ontology),
    }
    .map_err(|message| TrendError::corpus(path, message))?;
    for ex in &examples {
        ex.validate(false)
            .map_err(|e| TrendError::corpus(path, e.to_string()))?;
        if let Some(label) = ex.relations.iter().find(|l| ontology.index_of(l).is_none()) {
            return Err(TrendError::Ontology(format!(
                "{}: label {label:?} of {} is not in ontology {}",
                path.display(),
                ex.id,
                ontology.name
            )));
        }
    }
    Ok(examples)
}

fn parse_turn(line: &str, sep: &str) -> std::result::Result<Turn, String> {
    let (speaker, utterance) = line
        .split_once(sep)
        .ok_or_else(|| format!("turn {line:?} lacks a speaker separator {sep:?}"))?;
    Ok(Turn::new(speaker.trim(), utterance.trim()))
}

fn string_list(value: Option<&Value>, what: &str) -> std::result::Result<Vec<String>, String> {
    match value {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                Value::Number(n) => Ok(n.to_string()),
                other => Err(format!("{what}: expected strings, found {other}")),
            })
            .collect(),
        Some(other) => Err(format!("{what}: expected a list, found {other}")),
    }
}

fn required_str<'v>(
    obj: &'v serde_json::Map<String, Value>,
    key: &str,
    ctx: &str,
) -> std::result::Result<&'v str, String> {
    obj.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("{ctx}: missing string field {key:?}"))
}

fn parse_trigger_annotated(
    text: &str,
    cfg: &AdapterConfig,
) -> std::result::Result<Vec<DialogueExample>, String> {
    let records: Vec<Value> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let f = &cfg.fields;
    let mut out = Vec::new();
    for (rec_idx, record) in records.iter().enumerate() {
        let ctx = format!("record {rec_idx}");
        let [turns, entries] = record
            .as_array()
            .map(Vec::as_slice)
            .and_then(|a| <&[Value; 2]>::try_from(a).ok())
            .ok_or_else(|| format!("{ctx}: expected a [turns, entries] pair"))?;
        let turns = string_list(Some(turns), &ctx)?
            .iter()
            .map(|line| parse_turn(line, &cfg.speaker_separator))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("{ctx}: {e}"))?;
        let entries = entries
            .as_array()
            .ok_or_else(|| format!("{ctx}: entries must be a list"))?;
        for (entry_idx, entry) in entries.iter().enumerate() {
            let ctx = format!("record {rec_idx} entry {entry_idx}");
            let obj = entry
                .as_object()
                .ok_or_else(|| format!("{ctx}: expected an object"))?;
            let relations = string_list(obj.get(&f.relations), &ctx)?;
            let triggers = string_list(obj.get(&f.triggers), &ctx)?;
            let mut spans = Vec::new();
            for (i, trigger) in triggers.iter().enumerate() {
                let trigger = trigger.trim();
                if trigger.is_empty() {
                    continue;
                }
                if let Some((turn, start, end)) = locate_trigger(&turns, trigger) {
                    let text =
                        super::types::char_slice(&turns[turn].utterance, start, end).to_string();
                    spans.push(TriggerCharSpan {
                        turn,
                        start,
                        end,
                        text,
                        relation: relations
                            .get(i)
                            .filter(|_| triggers.len() == relations.len())
                            .cloned(),
                    });
                }
            }
            out.push(DialogueExample {
                id: format!("{rec_idx}-{entry_idx}"),
                turns: turns.clone(),
                subject: required_str(obj, &f.subject, &ctx)?.to_string(),
                object: required_str(obj, &f.object, &ctx)?.to_string(),
                relations,
                trigger_char_spans: Some(spans),
                dataset_tag: DatasetTag::TriggerAnnotated,
                context_level: cfg.context_level,
            });
        }
    }
    Ok(out)
}

/// First occurrence of `needle` in the dialogue, as (turn, char start, char
/// end). Case-insensitive; whole-word matches are preferred over substrings.
pub(crate) fn locate_trigger(turns: &[Turn], needle: &str) -> Option<(usize, usize, usize)> {
    let pat: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
    let find = |whole_word: bool| {
        turns.iter().enumerate().find_map(|(t, turn)| {
            let chars: Vec<char> = turn.utterance.chars().collect();
            let lower: Vec<char> = chars
                .iter()
                .map(|c| c.to_lowercase().next().unwrap_or(*c))
                .collect();
            if pat.len() > lower.len() {
                return None;
            }
            (0..=lower.len() - pat.len()).find_map(|i| {
                let end = i + pat.len();
                if lower[i..end] != pat[..] {
                    return None;
                }
                let bounded = (i == 0 || !chars[i - 1].is_alphanumeric())
                    && (end == chars.len() || !chars[end].is_alphanumeric());
                (bounded || !whole_word).then_some((t, i, end))
            })
        })
    };
    find(true).or_else(|| find(false))
}

fn parse_trigger_free(
    text: &str,
    cfg: &AdapterConfig,
    ontology: &RelationOntology,
) -> std::result::Result<Vec<DialogueExample>, String> {
    let f = &cfg.fields;
    struct Session {
        id: String,
        pair: Option<String>,
        turns: Vec<Turn>,
        label: Option<String>,
    }
    let mut sessions = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ctx = format!("line {}", line_no + 1);
        let value: Value = serde_json::from_str(line).map_err(|e| format!("{ctx}: {e}"))?;
        let obj = value
            .as_object()
            .ok_or_else(|| format!("{ctx}: expected an object"))?;
        let turns = string_list(obj.get(&f.context), &ctx)?
            .iter()
            .map(|l| parse_turn(l, &cfg.speaker_separator))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format!("{ctx}: {e}"))?;
        let label = match obj.get(&f.label) {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                resolve_label(v, cfg.numeric_labels, ontology)
                    .map_err(|e| format!("{ctx}: {e}"))?,
            ),
        };
        let scalar = |key: &str| {
            obj.get(key).and_then(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
        };
        let pair = scalar(&f.pair_id);
        let id = match (&pair, scalar(&f.session_id)) {
            (Some(p), Some(s)) => format!("{p}-{s}"),
            (None, Some(s)) => s,
            (_, None) => format!("line{}", line_no + 1),
        };
        sessions.push(Session {
            id,
            pair,
            turns,
            label,
        });
    }

    let example = |id: String, turns: Vec<Turn>, label: Option<String>| DialogueExample {
        id,
        turns,
        subject: cfg.subject_value.clone(),
        object: cfg.object_value.clone(),
        relations: label.into_iter().collect(),
        trigger_char_spans: None,
        dataset_tag: DatasetTag::TriggerFree,
        context_level: cfg.context_level,
    };

    match cfg.context_level {
        ContextLevel::Session => Ok(sessions
            .into_iter()
            .map(|s| example(s.id, s.turns, s.label))
            .collect()),
        ContextLevel::Pair => {
            let mut order: Vec<String> = Vec::new();
            let mut groups: BTreeMap<String, (Vec<Turn>, Option<String>)> = BTreeMap::new();
            for s in sessions {
                let pair = s
                    .pair
                    .ok_or_else(|| format!("session {} has no {:?} field", s.id, f.pair_id))?;
                let group = groups.entry(pair.clone()).or_insert_with(|| {
                    order.push(pair.clone());
                    (Vec::new(), None)
                });
                group.0.extend(s.turns);
                match (&group.1, s.label) {
                    (Some(a), Some(b)) if *a != b => {
                        return Err(format!(
                            "pair {pair} carries conflicting labels {a:?} and {b:?}"
                        ));
                    }
                    (None, Some(b)) => group.1 = Some(b),
                    _ => {}
                }
            }
            Ok(order
                .into_iter()
                .map(|pair| {
                    let (turns, label) = groups.remove(&pair).unwrap_or_default();
                    example(pair, turns, label)
                })
                .collect())
        }
    }
}

fn resolve_label(
    value: &Value,
    numeric: bool,
    ontology: &RelationOntology,
) -> std::result::Result<String, String> {
    let raw = match value {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => return Err(format!("label must be a string or number, found {other}")),
    };
    if !numeric {
        return Ok(raw);
    }
    let k: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("label {raw:?} is not a class number"))?;
    k.checked_sub(1)
        .and_then(|i| ontology.label(i))
        .map(str::to_string)
        .ok_or_else(|| format!("label {k} is outside 1..={}", ontology.len()))
}
