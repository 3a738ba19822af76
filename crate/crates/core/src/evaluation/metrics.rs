use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::ontology::{Partition, RelationOntology};
use crate::corpus::TriggerSpan;
use crate::error::{Result, TrendError};

/// Micro-averaged F1 over `(instance id, relation)` pairs.
///
/// Gold pairs are treated as a set, so duplicated gold instances for one
/// query contribute one pair per label.
pub fn micro_f1(preds: &[(String, String)], golds: &[(String, String)]) -> Result<f64> {
    let mut pred_set = HashSet::with_capacity(preds.len());
    for p in preds {
        if !pred_set.insert(p) {
            return Err(TrendError::InvalidInput(format!(
                "duplicate prediction {p:?}"
            )));
        }
    }
    let gold_set: HashSet<_> = golds.iter().collect();
    let correct = pred_set.intersection(&gold_set).count() as f64;
    Ok(f1(correct, pred_set.len() as f64, gold_set.len() as f64))
}

fn f1(correct: f64, predicted: f64, gold: f64) -> f64 {
    let p = if predicted > 0.0 {
        correct / predicted
    } else {
        0.0
    };
    let r = if gold > 0.0 { correct / gold } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn check_aligned(preds: &[String], golds: &[String]) -> Result<()> {
    if preds.len() != golds.len() {
        return Err(TrendError::InvalidInput(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    Ok(())
}

/// Per-class F1 for every class present in `golds` (paired lists).
fn per_class_f1<'a>(preds: &[&'a str], golds: &[&'a str]) -> BTreeMap<&'a str, f64> {
    let classes: BTreeSet<&str> = golds.iter().copied().collect();
    classes
        .into_iter()
        .map(|c| {
            let mut tp = 0.0;
            let mut predicted = 0.0;
            let mut gold = 0.0;
            for (p, g) in preds.iter().zip(golds) {
                if *p == c {
                    predicted += 1.0;
                }
                if *g == c {
                    gold += 1.0;
                    if *p == c {
                        tp += 1.0;
                    }
                }
            }
            (c, f1(tp, predicted, gold))
        })
        .collect()
}

/// Accuracy and macro-F after mapping both sides to `granularity` classes.
/// Classes absent from the golds do not enter the macro average.
pub fn accuracy_and_macro_f(
    preds: &[String],
    golds: &[String],
    granularity: usize,
    ontology: &RelationOntology,
) -> Result<(f64, f64)> {
    check_aligned(preds, golds)?;
    if golds.is_empty() {
        return Ok((0.0, 0.0));
    }
    let p = coarsen_all(preds, granularity, ontology)?;
    let g = coarsen_all(golds, granularity, ontology)?;
    let correct = p.iter().zip(&g).filter(|(a, b)| a == b).count();
    let acc = correct as f64 / g.len() as f64;
    let per_class = per_class_f1(&p, &g);
    let macro_f = per_class.values().sum::<f64>() / per_class.len() as f64;
    Ok((acc, macro_f))
}

fn coarsen_all<'a>(
    labels: &'a [String],
    granularity: usize,
    ontology: &'a RelationOntology,
) -> Result<Vec<&'a str>> {
    labels
        .iter()
        .map(|l| ontology.coarsen(l, granularity))
        .collect()
}

/// F1 restricted to the seen or unseen relation classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeenUnseenF1 {
    pub seen: f64,
    pub unseen: f64,
    /// No gold instance belongs to the seen partition.
    pub seen_empty: bool,
    pub unseen_empty: bool,
}

/// Mean per-class F1 over the gold classes of each partition.
pub fn seen_unseen_f1(
    preds: &[String],
    golds: &[String],
    ontology: &RelationOntology,
) -> Result<SeenUnseenF1> {
    check_aligned(preds, golds)?;
    let p: Vec<&str> = preds.iter().map(String::as_str).collect();
    let g: Vec<&str> = golds.iter().map(String::as_str).collect();
    let mut sums = [(0.0, 0usize); 2];
    for (class, score) in per_class_f1(&p, &g) {
        let partition = ontology.partition(class).ok_or_else(|| {
            TrendError::Ontology(format!("label {class:?} has no seen/unseen status"))
        })?;
        let slot = &mut sums[(partition == Partition::Unseen) as usize];
        slot.0 += score;
        slot.1 += 1;
    }
    let mean = |(sum, n): (f64, usize)| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(SeenUnseenF1 {
        seen: mean(sums[0]),
        unseen: mean(sums[1]),
        seen_empty: sums[0].1 == 0,
        unseen_empty: sums[1].1 == 0,
    })
}

/// Fraction of predicted spans equal to one of the gold alternatives.
/// Callers pass only instances that carry a gold trigger.
pub fn trigger_exact_match(preds: &[TriggerSpan], gold_sets: &[Vec<TriggerSpan>]) -> Result<f64> {
    if preds.len() != gold_sets.len() {
        return Err(TrendError::InvalidInput(format!(
            "{} predicted spans for {} gold span sets",
            preds.len(),
            gold_sets.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    let hits = preds
        .iter()
        .zip(gold_sets)
        .filter(|(p, golds)| p.exists && golds.contains(p))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

pub fn gate_accuracy(preds: &[bool], golds: &[bool]) -> Result<f64> {
    if preds.len() != golds.len() {
        return Err(TrendError::InvalidInput(format!(
            "{} gate decisions for {} gold gates",
            preds.len(),
            golds.len()
        )));
    }
    if preds.is_empty() {
        return Ok(0.0);
    }
    Ok(preds.iter().zip(golds).filter(|(a, b)| a == b).count() as f64 / preds.len() as f64)
}
