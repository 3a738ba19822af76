//! Brute-force reference metrics and random scoring cases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trend_core::evaluation::{
    accuracy_and_macro_f, micro_f1, seen_unseen_f1, trigger_exact_match, RelationOntology,
};
use trend_core::TriggerSpan;

fn harmonic(tp: usize, predicted: usize, gold: usize) -> f64 {
    let p = if predicted == 0 {
        0.0
    } else {
        tp as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        tp as f64 / gold as f64
    };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn micro_f1_reference(preds: &[(String, String)], golds: &[(String, String)]) -> f64 {
    let mut unique: Vec<&(String, String)> = Vec::new();
    for g in golds {
        if !unique.contains(&g) {
            unique.push(g);
        }
    }
    let tp = preds.iter().filter(|p| unique.contains(p)).count();
    harmonic(tp, preds.len(), unique.len())
}

fn coarse<'a>(o: &'a RelationOntology, label: &'a str, g: usize) -> &'a str {
    if g == o.labels.len() {
        label
    } else {
        o.coarse[&g.to_string()][label].as_str()
    }
}

fn class_f1(preds: &[&str], golds: &[&str], class: &str) -> f64 {
    let mut tp = 0;
    let mut predicted = 0;
    let mut gold = 0;
    for i in 0..golds.len() {
        predicted += usize::from(preds[i] == class);
        gold += usize::from(golds[i] == class);
        tp += usize::from(preds[i] == class && golds[i] == class);
    }
    harmonic(tp, predicted, gold)
}

fn sorted_gold_classes<'a>(golds: &[&'a str]) -> Vec<&'a str> {
    let mut classes: Vec<&str> = golds.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

pub fn acc_macro_reference(
    preds: &[String],
    golds: &[String],
    g: usize,
    o: &RelationOntology,
) -> (f64, f64) {
    let p: Vec<&str> = preds.iter().map(|l| coarse(o, l, g)).collect();
    let q: Vec<&str> = golds.iter().map(|l| coarse(o, l, g)).collect();
    let hits = (0..q.len()).filter(|&i| p[i] == q[i]).count();
    let classes = sorted_gold_classes(&q);
    let mut sum = 0.0;
    for c in &classes {
        sum += class_f1(&p, &q, c);
    }
    (hits as f64 / q.len() as f64, sum / classes.len() as f64)
}

pub fn seen_unseen_reference(
    preds: &[String],
    golds: &[String],
    o: &RelationOntology,
) -> (f64, f64) {
    let p: Vec<&str> = preds.iter().map(String::as_str).collect();
    let q: Vec<&str> = golds.iter().map(String::as_str).collect();
    let mut seen = (0.0, 0);
    let mut unseen = (0.0, 0);
    for c in sorted_gold_classes(&q) {
        let f = class_f1(&p, &q, c);
        let slot = if o.cross_map[c].is_empty() {
            &mut unseen
        } else {
            &mut seen
        };
        slot.0 += f;
        slot.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
    (mean(seen), mean(unseen))
}

pub fn exact_match_reference(preds: &[TriggerSpan], golds: &[Vec<TriggerSpan>]) -> f64 {
    let mut hits = 0;
    for (p, g) in preds.iter().zip(golds) {
        if p.exists
            && g.iter()
                .any(|s| s.start == p.start && s.end == p.end && s.exists)
        {
            hits += 1;
        }
    }
    if preds.is_empty() {
        0.0
    } else {
        hits as f64 / preds.len() as f64
    }
}

/// Outcome of one randomized comparison.
pub struct CaseResult {
    pub exact: bool,
    pub monotone: bool,
}

fn random_span(rng: &mut ChaCha8Rng) -> TriggerSpan {
    let s = rng.random_range(0..6);
    TriggerSpan::new(s, s + rng.random_range(0..3))
}

/// One random case (1..=20 instances) checked against every reference.
pub fn run_case(seed: u64, o: &RelationOntology) -> CaseResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=20);
    // a skewed label draw makes hits likely
    let pick = |rng: &mut ChaCha8Rng| o.labels[rng.random_range(0..o.labels.len().min(5))].clone();
    let golds: Vec<String> = (0..n).map(|_| pick(&mut rng)).collect();
    let preds: Vec<String> = golds
        .iter()
        .map(|g| {
            if rng.random_bool(0.5) {
                g.clone()
            } else {
                pick(&mut rng)
            }
        })
        .collect();

    // duplicated gold pairs share an id
    let ids: Vec<String> = (0..n).map(|i| format!("d{}", i / 2)).collect();
    let gold_pairs: Vec<(String, String)> =
        ids.iter().cloned().zip(golds.iter().cloned()).collect();
    let mut pred_pairs: Vec<(String, String)> = Vec::new();
    for (id, p) in ids.iter().zip(&preds) {
        if !pred_pairs.iter().any(|(i, _)| i == id) {
            pred_pairs.push((id.clone(), p.clone()));
        }
    }

    let mut exact =
        micro_f1(&pred_pairs, &gold_pairs).unwrap() == micro_f1_reference(&pred_pairs, &gold_pairs);
    let mut accs = Vec::new();
    for g in o.granularities() {
        let got = accuracy_and_macro_f(&preds, &golds, g, o).unwrap();
        exact &= got == acc_macro_reference(&preds, &golds, g, o);
        accs.push(got.0);
    }
    let su = seen_unseen_f1(&preds, &golds, o).unwrap();
    exact &= (su.seen, su.unseen) == seen_unseen_reference(&preds, &golds, o);

    let spans: Vec<TriggerSpan> = (0..n).map(|_| random_span(&mut rng)).collect();
    let gold_sets: Vec<Vec<TriggerSpan>> = (0..n)
        .map(|_| {
            (0..rng.random_range(1..=2))
                .map(|_| random_span(&mut rng))
                .collect()
        })
        .collect();
    exact &= trigger_exact_match(&spans, &gold_sets).unwrap()
        == exact_match_reference(&spans, &gold_sets);

    // granularities ascend, so accuracy must not increase along the list
    let monotone = accs.windows(2).all(|w| w[0] >= w[1]);
    CaseResult { exact, monotone }
}
