//! Task heads: explicit-trigger gate, start/end span pointers and the
//! attention-fusion relation classifier.

use candle_core::{Tensor, D};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TriggerSpan;
use crate::encoder::{linear, softmax_last};
use crate::error::{Result, TrendError};
use crate::params::{Init, ParamStore};

pub const GATE_WEIGHT: &str = "heads.gate.weight";
pub const GATE_BIAS: &str = "heads.gate.bias";
pub const START_WEIGHT: &str = "heads.span.start.weight";
pub const START_BIAS: &str = "heads.span.start.bias";
pub const END_WEIGHT: &str = "heads.span.end.weight";
pub const END_BIAS: &str = "heads.span.end.bias";
pub const NULL_TRIGGER: &str = "heads.null_trigger";
pub const RELATION_WEIGHT: &str = "heads.relation.weight";
pub const RELATION_BIAS: &str = "heads.relation.bias";

/// Prefixes of the parameters that decide which trigger is fed to fusion.
pub const TRIGGER_PATH_PREFIXES: [&str; 2] = ["heads.gate.", "heads.span."];
pub const RELATION_HEAD_PREFIX: &str = "heads.relation.";

pub const DEFAULT_MAX_SPAN_LEN: usize = 10;

/// Raw head outputs for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub gate_logit: f32,
    /// `-inf` outside the dialogue region
    pub start_logits: Vec<f32>,
    pub end_logits: Vec<f32>,
    pub relation_logits: Vec<f32>,
}

pub fn init_heads(
    store: &mut ParamStore,
    d: usize,
    num_relations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let std = Init::Normal { std: 0.02 };
    store.init(GATE_WEIGHT, &[1, d], std, rng)?;
    store.init(GATE_BIAS, &[1], Init::Zeros, rng)?;
    store.init(START_WEIGHT, &[1, d], std, rng)?;
    store.init(START_BIAS, &[1], Init::Zeros, rng)?;
    store.init(END_WEIGHT, &[1, d], std, rng)?;
    store.init(END_BIAS, &[1], Init::Zeros, rng)?;
    store.init(NULL_TRIGGER, &[d], std, rng)?;
    init_relation_head(store, d, num_relations, rng)
}

/// (Re)creates the relation classifier over `concat(c, fused)`.
pub fn init_relation_head(
    store: &mut ParamStore,
    d: usize,
    num_relations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if num_relations == 0 {
        return Err(TrendError::Ontology(
            "relation head needs at least one label".into(),
        ));
    }
    store.remove(RELATION_WEIGHT);
    store.remove(RELATION_BIAS);
    let bound = 1.0 / ((2 * d) as f64).sqrt();
    store.init(
        RELATION_WEIGHT,
        &[num_relations, 2 * d],
        Init::Uniform { bound },
        rng,
    )?;
    store.init(
        RELATION_BIAS,
        &[num_relations],
        Init::Uniform { bound },
        rng,
    )?;
    Ok(())
}

/// Gate logits, shape (batch,), from the second `[CLS]` vectors (batch, d).
pub fn gate_forward(store: &ParamStore, cls2: &Tensor) -> Result<Tensor> {
    let y = linear(cls2, &store.get(GATE_WEIGHT)?, Some(&store.get(GATE_BIAS)?))?;
    Ok(y.squeeze(D::Minus1)?)
}

/// Inference decision; a logit of exactly 0 (probability 0.5) predicts "explicit".
pub fn gate_decision(logit: f32) -> bool {
    logit >= 0.0
}

/// Start and end logits (batch, seq), `-inf` wherever `dialogue_mask` is 0.
pub fn span_forward(
    store: &ParamStore,
    hidden: &Tensor,
    dialogue_mask: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let counts = dialogue_mask
        .to_dtype(candle_core::DType::U32)?
        .sum(D::Minus1)?
        .to_vec1::<u32>()?;
    if let Some(row) = counts.iter().position(|&c| c == 0) {
        return Err(TrendError::InvalidInput(format!(
            "no dialogue tokens in batch row {row}"
        )));
    }
    let neg_inf = Tensor::full(f32::NEG_INFINITY, dialogue_mask.dims(), hidden.device())?
        .to_dtype(hidden.dtype())?;
    let project = |w: &str, b: &str| -> Result<Tensor> {
        let y = linear(hidden, &store.get(w)?, Some(&store.get(b)?))?.squeeze(D::Minus1)?;
        Ok(dialogue_mask.where_cond(&y, &neg_inf)?)
    };
    Ok((
        project(START_WEIGHT, START_BIAS)?,
        project(END_WEIGHT, END_BIAS)?,
    ))
}

/// Index of the largest value among positions where `allowed` holds; ties
/// go to the smallest index.
pub fn masked_argmax(values: &[f32], allowed: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if allowed(i) && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Picks the trigger span: best start, then the best end within
/// `[start, start + max_span_len - 1]` on the dialogue region.
pub fn decode_span(
    start_logits: &[f32],
    end_logits: &[f32],
    dialogue_mask: &[bool],
    gate: bool,
    max_span_len: usize,
) -> Result<TriggerSpan> {
    if !gate {
        return Ok(TriggerSpan::EMPTY);
    }
    let allowed = |i: usize| dialogue_mask.get(i).copied().unwrap_or(false);
    let start = masked_argmax(start_logits, allowed)
        .ok_or_else(|| TrendError::InvalidInput("no dialogue tokens to point at".into()))?;
    let last = start + max_span_len.max(1) - 1;
    let end = masked_argmax(end_logits, |i| allowed(i) && start <= i && i <= last).unwrap_or(start);
    Ok(TriggerSpan::new(start, end))
}

/// Attention weights `softmax(x_i · c)` of trigger vectors `x` (k, d) under context `c` (d,).
pub fn attention_weights(c: &Tensor, x: &Tensor) -> Result<Tensor> {
    let scores = x.matmul(&c.unsqueeze(1)?)?.squeeze(1)?;
    softmax_last(&scores)
}

/// `Σ_i w_i x_i` with `w = attention_weights(c, x)`.
pub fn fuse(c: &Tensor, x: &Tensor) -> Result<Tensor> {
    let w = attention_weights(c, x)?;
    Ok(w.unsqueeze(0)?.matmul(x)?.squeeze(0)?)
}

/// Fused trigger vector, or the learned null embedding for an empty trigger.
pub fn fuse_or_null(store: &ParamStore, c: &Tensor, x: Option<&Tensor>) -> Result<Tensor> {
    match x {
        Some(x) => fuse(c, x),
        None => store.get(NULL_TRIGGER),
    }
}

/// Relation logits (batch, |R|) from `concat(c, fused)`.
pub fn relation_forward(store: &ParamStore, fused: &Tensor, c: &Tensor) -> Result<Tensor> {
    relation_logits(
        &store.get(RELATION_WEIGHT)?,
        &store.get(RELATION_BIAS)?,
        fused,
        c,
    )
}

pub fn relation_logits(w: &Tensor, b: &Tensor, fused: &Tensor, c: &Tensor) -> Result<Tensor> {
    let features = Tensor::cat(&[c, fused], D::Minus1)?;
    linear(&features, w, Some(b))
}

/// Fused vectors (batch, d) for the given spans of an encoded batch.
pub fn fuse_batch(
    store: &ParamStore,
    hidden: &Tensor,
    cls1: &Tensor,
    spans: &[TriggerSpan],
) -> Result<Tensor> {
    let rows = spans
        .iter()
        .enumerate()
        .map(|(i, span)| {
            let c = cls1.get(i)?;
            if span.exists {
                let (s, e) = (span.start as usize, span.end as usize);
                let x = hidden.get(i)?.narrow(0, s, e - s + 1)?;
                fuse(&c, &x)
            } else {
                fuse_or_null(store, &c, None)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::stack(&rows, 0)?)
}
