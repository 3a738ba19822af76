use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{
    accuracy_and_macro_f, gate_accuracy, micro_f1, seen_unseen_f1, trigger_exact_match,
    SeenUnseenF1,
};
use super::ontology::RelationOntology;
use crate::corpus::{DatasetTag, TokenizedInstance, TriggerSpan};
use crate::error::{Result, TrendError};
use crate::model::InstancePrediction;

/// One line of a prediction file; also the format for scoring external models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    pub relation: String,
    pub gate: bool,
    /// Inclusive token span, or null when no trigger was extracted.
    pub span: Option<[usize; 2]>,
    /// Surface text of the span, or "implicit".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger: Option<String>,
}

pub const IMPLICIT: &str = "implicit";

impl PredictionRecord {
    pub fn from_prediction(
        pred: &InstancePrediction,
        inst: &TokenizedInstance,
        ontology: &RelationOntology,
    ) -> Result<Self> {
        let relation = ontology
            .label(pred.relation)
            .ok_or_else(|| {
                TrendError::Ontology(format!(
                    "relation index {} outside the ontology",
                    pred.relation
                ))
            })?
            .to_string();
        let span = pred
            .span
            .exists
            .then_some([pred.span.start as usize, pred.span.end as usize]);
        let trigger = Some(match span {
            Some(_) => span_text(inst, pred.span),
            None => IMPLICIT.to_string(),
        });
        Ok(PredictionRecord {
            id: pred.id.clone(),
            relation,
            gate: pred.gate,
            span,
            trigger,
        })
    }

    pub fn trigger_span(&self) -> TriggerSpan {
        match self.span {
            Some([s, e]) => TriggerSpan::new(s, e),
            None => TriggerSpan::EMPTY,
        }
    }
}

/// Surface text of a token span, with subword pieces rejoined.
pub fn span_text(inst: &TokenizedInstance, span: TriggerSpan) -> String {
    let mut out = String::new();
    for i in span.positions() {
        let Some(tok) = inst.tokens.get(i) else { break };
        match tok.strip_prefix("##") {
            Some(rest) => out.push_str(rest),
            None => {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
    }
    out
}

/// Records for every instance; duplicated instances yield one record per id.
pub fn prediction_records(
    preds: &[InstancePrediction],
    instances: &[TokenizedInstance],
    ontology: &RelationOntology,
) -> Result<Vec<PredictionRecord>> {
    if preds.len() != instances.len() {
        return Err(TrendError::InvalidInput(format!(
            "{} predictions for {} instances",
            preds.len(),
            instances.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (p, inst) in preds.iter().zip(instances) {
        if seen.insert(p.id.as_str()) {
            out.push(PredictionRecord::from_prediction(p, inst, ontology)?);
        }
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| TrendError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| TrendError::io(path, e))?;
    }
    w.flush().map_err(|e| TrendError::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| TrendError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TrendError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| TrendError::corpus(path, format!("line {}: {e}", n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Accuracy and macro-F at one granularity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularityScores {
    pub classes: usize,
    pub accuracy: f64,
    pub macro_f: f64,
}

/// All metrics that apply to a scored corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub ontology: String,
    pub instances: usize,
    pub relation_f1: f64,
    pub granularities: Vec<GranularityScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen_unseen: Option<SeenUnseenF1>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trigger_em: Option<f64>,
}

/// Metrics tracked after each training epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub relation_f1: f64,
    pub relation_accuracy: f64,
    pub gate_accuracy: Option<f64>,
    pub trigger_em: Option<f64>,
}

/// Aligns records to instances by id.
fn align<'a>(
    records: &'a [PredictionRecord],
    instances: &[TokenizedInstance],
) -> Result<Vec<&'a PredictionRecord>> {
    let mut by_id: HashMap<&str, &PredictionRecord> = HashMap::with_capacity(records.len());
    for r in records {
        if by_id.insert(r.id.as_str(), r).is_some() {
            return Err(TrendError::InvalidInput(format!(
                "duplicate prediction for {}",
                r.id
            )));
        }
    }
    instances
        .iter()
        .map(|inst| {
            by_id.get(inst.id.as_str()).copied().ok_or_else(|| {
                TrendError::InvalidInput(format!("no prediction for instance {}", inst.id))
            })
        })
        .collect()
}

fn gold_label(inst: &TokenizedInstance, ontology: &RelationOntology) -> Result<String> {
    inst.relation_label
        .and_then(|r| ontology.label(r))
        .map(str::to_string)
        .ok_or_else(|| {
            TrendError::InvalidInput(format!("instance {} has no gold relation", inst.id))
        })
}

struct Scored {
    f1: f64,
    pred_labels: Vec<String>,
    gold_labels: Vec<String>,
    gate_accuracy: Option<f64>,
    trigger_em: Option<f64>,
}

fn score(
    records: &[PredictionRecord],
    instances: &[TokenizedInstance],
    ontology: &RelationOntology,
) -> Result<Scored> {
    let aligned = align(records, instances)?;
    let gold_labels = instances
        .iter()
        .map(|i| gold_label(i, ontology))
        .collect::<Result<Vec<_>>>()?;
    let pred_labels: Vec<String> = aligned.iter().map(|r| r.relation.clone()).collect();
    for l in &pred_labels {
        if ontology.index_of(l).is_none() {
            return Err(TrendError::Ontology(format!(
                "predicted label {l:?} is not in ontology {}",
                ontology.name
            )));
        }
    }

    let mut pred_pairs: BTreeMap<&str, (String, String)> = BTreeMap::new();
    for r in &aligned {
        pred_pairs
            .entry(r.id.as_str())
            .or_insert_with(|| (r.id.clone(), r.relation.clone()));
    }
    let pred_pairs: Vec<_> = pred_pairs.into_values().collect();
    let gold_pairs: Vec<_> = instances
        .iter()
        .zip(&gold_labels)
        .map(|(i, l)| (i.id.clone(), l.clone()))
        .collect();
    let f1 = micro_f1(&pred_pairs, &gold_pairs)?;

    let annotated: Vec<usize> = (0..instances.len())
        .filter(|&i| instances[i].dataset_tag == DatasetTag::TriggerAnnotated)
        .collect();
    let gate_acc = if annotated.is_empty() {
        None
    } else {
        let p: Vec<bool> = annotated.iter().map(|&i| aligned[i].gate).collect();
        let g: Vec<bool> = annotated.iter().map(|&i| instances[i].gate_label).collect();
        Some(gate_accuracy(&p, &g)?)
    };
    let explicit: Vec<usize> = annotated
        .iter()
        .copied()
        .filter(|&i| instances[i].gate_label)
        .collect();
    let trigger_em = if explicit.is_empty() {
        None
    } else {
        let p: Vec<TriggerSpan> = explicit
            .iter()
            .map(|&i| aligned[i].trigger_span())
            .collect();
        let g: Vec<Vec<TriggerSpan>> = explicit
            .iter()
            .map(|&i| instances[i].trigger_alternatives.clone())
            .collect();
        Some(trigger_exact_match(&p, &g)?)
    };
    Ok(Scored {
        f1,
        pred_labels,
        gold_labels,
        gate_accuracy: gate_acc,
        trigger_em,
    })
}

/// Full report for `records` scored against labeled `instances`.
pub fn evaluate(
    records: &[PredictionRecord],
    instances: &[TokenizedInstance],
    ontology: &RelationOntology,
) -> Result<EvaluationReport> {
    let s = score(records, instances, ontology)?;
    let granularities = ontology
        .granularities()
        .into_iter()
        .map(|g| {
            let (accuracy, macro_f) =
                accuracy_and_macro_f(&s.pred_labels, &s.gold_labels, g, ontology)?;
            Ok(GranularityScores {
                classes: g,
                accuracy,
                macro_f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let seen_unseen = if ontology.has_cross_map() {
        Some(seen_unseen_f1(&s.pred_labels, &s.gold_labels, ontology)?)
    } else {
        None
    };
    Ok(EvaluationReport {
        ontology: ontology.name.clone(),
        instances: instances.len(),
        relation_f1: s.f1,
        granularities,
        seen_unseen,
        gate_accuracy: s.gate_accuracy,
        trigger_em: s.trigger_em,
    })
}

/// Epoch-level metrics over model predictions.
pub fn dev_metrics(
    preds: &[InstancePrediction],
    instances: &[TokenizedInstance],
    ontology: &RelationOntology,
) -> Result<DevMetrics> {
    let records = prediction_records(preds, instances, ontology)?;
    let s = score(&records, instances, ontology)?;
    let correct = preds
        .iter()
        .zip(instances)
        .filter(|(p, i)| i.relation_label == Some(p.relation))
        .count();
    Ok(DevMetrics {
        relation_f1: s.f1,
        relation_accuracy: if instances.is_empty() {
            0.0
        } else {
            correct as f64 / instances.len() as f64
        },
        gate_accuracy: s.gate_accuracy,
        trigger_em: s.trigger_em,
    })
}

impl EvaluationReport {
    /// Plain-text table of every metric in the report.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "ontology     {} ({} instances)",
            self.ontology, self.instances
        );
        let _ = writeln!(out, "relation F1  {:.4}", self.relation_f1);
        let _ = writeln!(out, "{:<12} {:>8} {:>8}", "classes", "acc", "macro-F");
        for g in &self.granularities {
            let _ = writeln!(
                out,
                "{:<12} {:>8.4} {:>8.4}",
                g.classes, g.accuracy, g.macro_f
            );
        }
        if let Some(su) = &self.seen_unseen {
            let flag = |empty: bool| if empty { " (empty)" } else { "" };
            let _ = writeln!(out, "seen F1      {:.4}{}", su.seen, flag(su.seen_empty));
            let _ = writeln!(
                out,
                "unseen F1    {:.4}{}",
                su.unseen,
                flag(su.unseen_empty)
            );
        }
        if let Some(g) = self.gate_accuracy {
            let _ = writeln!(out, "gate acc     {g:.4}");
        }
        if let Some(em) = self.trigger_em {
            let _ = writeln!(out, "trigger EM   {em:.4}");
        }
        out
    }
}
