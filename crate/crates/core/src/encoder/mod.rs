//! Bidirectional transformer encoder producing the per-token vectors and the
//! two `[CLS]` summaries consumed by the task heads.
//!
//! One implementation serves every backbone. The tiny variant is randomly
//! initialized from a seed; the pretrained variants read BERT-format weights.

mod batch;
mod config;
mod pretrained;

pub use batch::Batch;
pub use config::{Backbone, EncoderConfig};
pub use pretrained::{load_pretrained, Pretrained};

use candle_core::{DType, Tensor, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrendError};
use crate::params::{Init, ParamStore};

pub const PREFIX: &str = "encoder.";

/// Encoder output for one padded batch.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    /// (batch, seq, d)
    pub hidden: Tensor,
    /// (batch, d): vector at position 0
    pub cls1: Tensor,
    /// (batch, d): vector at each instance's second `[CLS]`
    pub cls2: Tensor,
    /// (batch, seq), 1 for real tokens, 0 for padding
    pub mask: Tensor,
}

/// Names of every encoder parameter, in creation order, with their shapes.
pub fn parameter_shapes(cfg: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.hidden_size;
    let mut out = vec![
        (
            format!("{PREFIX}embeddings.word_embeddings.weight"),
            vec![cfg.vocab_size, d],
        ),
        (
            format!("{PREFIX}embeddings.position_embeddings.weight"),
            vec![cfg.max_position, d],
        ),
        (
            format!("{PREFIX}embeddings.token_type_embeddings.weight"),
            vec![cfg.type_vocab_size, d],
        ),
        (format!("{PREFIX}embeddings.LayerNorm.weight"), vec![d]),
        (format!("{PREFIX}embeddings.LayerNorm.bias"), vec![d]),
    ];
    for l in 0..cfg.num_layers {
        let p = format!("{PREFIX}encoder.layer.{l}.");
        for proj in ["query", "key", "value"] {
            out.push((format!("{p}attention.self.{proj}.weight"), vec![d, d]));
            out.push((format!("{p}attention.self.{proj}.bias"), vec![d]));
        }
        out.push((format!("{p}attention.output.dense.weight"), vec![d, d]));
        out.push((format!("{p}attention.output.dense.bias"), vec![d]));
        out.push((format!("{p}attention.output.LayerNorm.weight"), vec![d]));
        out.push((format!("{p}attention.output.LayerNorm.bias"), vec![d]));
        out.push((
            format!("{p}intermediate.dense.weight"),
            vec![cfg.intermediate_size, d],
        ));
        out.push((
            format!("{p}intermediate.dense.bias"),
            vec![cfg.intermediate_size],
        ));
        out.push((
            format!("{p}output.dense.weight"),
            vec![d, cfg.intermediate_size],
        ));
        out.push((format!("{p}output.dense.bias"), vec![d]));
        out.push((format!("{p}output.LayerNorm.weight"), vec![d]));
        out.push((format!("{p}output.LayerNorm.bias"), vec![d]));
    }
    out
}

/// Fills `store` with freshly initialized encoder weights.
pub fn init_random(
    store: &mut ParamStore,
    cfg: &EncoderConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for (name, shape) in parameter_shapes(cfg) {
        let init = if name.ends_with("LayerNorm.weight") {
            Init::Ones
        } else if name.ends_with(".bias") {
            Init::Zeros
        } else {
            Init::Normal {
                std: cfg.initializer_range,
            }
        };
        store.init(&name, &shape, init, rng)?;
    }
    Ok(())
}

/// Checks that `store` holds every encoder tensor with the expected shape.
pub fn check_parameters(store: &ParamStore, cfg: &EncoderConfig) -> Result<()> {
    for (name, shape) in parameter_shapes(cfg) {
        let t = store.get(&name)?;
        if t.dims() != shape.as_slice() {
            return Err(TrendError::Checkpoint(format!(
                "parameter {name} has shape {:?}, expected {shape:?}",
                t.dims()
            )));
        }
    }
    Ok(())
}

/// `x @ w.T + b` for `x` of shape (.., in) and `w` of shape (out, in).
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let y = x.broadcast_matmul(&w.t()?)?;
    Ok(match b {
        Some(b) => y.broadcast_add(b)?,
        None => y,
    })
}

pub fn layer_norm(x: &Tensor, w: &Tensor, b: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let centered = x.broadcast_sub(&mean)?;
    let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
    let normed = centered.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(normed.broadcast_mul(w)?.broadcast_add(b)?)
}

/// Softmax over the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    let sum = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&sum)?)
}

/// Log-softmax over the last dimension.
pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

fn dropout(x: &Tensor, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.clone()) };
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let n = x.elem_count();
    let mask: Vec<f32> = (0..n)
        .map(|_| {
            if rng.random_bool(keep) {
                (1.0 / keep) as f32
            } else {
                0.0
            }
        })
        .collect();
    let mask = Tensor::from_vec(mask, x.dims(), x.device())?.to_dtype(x.dtype())?;
    Ok(x.mul(&mask)?)
}

/// Runs the encoder. `rng` enables dropout (training mode).
pub fn encode(
    store: &ParamStore,
    cfg: &EncoderConfig,
    batch: &Batch,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<EncodedBatch> {
    let (b, l) = batch.ids.dims2()?;
    if l > cfg.max_position {
        return Err(TrendError::InvalidInput(format!(
            "sequence length {l} exceeds encoder maximum {}",
            cfg.max_position
        )));
    }
    let d = cfg.hidden_size;
    let h = cfg.num_heads;
    let dh = d / h;
    let dtype = store.dtype();
    let dev = store.device().clone();
    let p = |name: &str| store.get(&format!("{PREFIX}{name}"));

    let word =
        p("embeddings.word_embeddings.weight")?.index_select(&batch.ids.flatten_all()?, 0)?;
    let types = p("embeddings.token_type_embeddings.weight")?
        .index_select(&batch.type_ids.flatten_all()?, 0)?;
    let positions = Tensor::arange(0u32, l as u32, &dev)?;
    let pos = p("embeddings.position_embeddings.weight")?.index_select(&positions, 0)?;
    let x = (word + types)?.reshape((b, l, d))?.broadcast_add(&pos)?;
    let x = layer_norm(
        &x,
        &p("embeddings.LayerNorm.weight")?,
        &p("embeddings.LayerNorm.bias")?,
        cfg.layer_norm_eps,
    )?;
    let mut x = dropout(&x, cfg.hidden_dropout, rng.as_deref_mut())?;

    let mask = batch.attention_mask.to_dtype(dtype)?;
    // (b, 1, 1, l): 0 for real tokens, a large negative value for padding
    let bias = ((mask.ones_like()? - &mask)? * -1e9)?.reshape((b, 1, 1, l))?;
    let scale = 1.0 / (dh as f64).sqrt();

    for layer in 0..cfg.num_layers {
        let lp = |name: &str| p(&format!("encoder.layer.{layer}.{name}"));
        let heads = |proj: &str| -> Result<Tensor> {
            let y = linear(
                &x,
                &lp(&format!("attention.self.{proj}.weight"))?,
                Some(&lp(&format!("attention.self.{proj}.bias"))?),
            )?;
            Ok(y.reshape((b, l, h, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = heads("query")?;
        let k = heads("key")?;
        let v = heads("value")?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? * scale)?.broadcast_add(&bias)?;
        let probs = softmax_last(&scores)?;
        let probs = dropout(&probs, cfg.attention_dropout, rng.as_deref_mut())?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, l, d))?;
        let attn = linear(
            &ctx,
            &lp("attention.output.dense.weight")?,
            Some(&lp("attention.output.dense.bias")?),
        )?;
        let attn = dropout(&attn, cfg.hidden_dropout, rng.as_deref_mut())?;
        let x1 = layer_norm(
            &(attn + &x)?,
            &lp("attention.output.LayerNorm.weight")?,
            &lp("attention.output.LayerNorm.bias")?,
            cfg.layer_norm_eps,
        )?;
        let inter = linear(
            &x1,
            &lp("intermediate.dense.weight")?,
            Some(&lp("intermediate.dense.bias")?),
        )?
        .gelu_erf()?;
        let out = linear(
            &inter,
            &lp("output.dense.weight")?,
            Some(&lp("output.dense.bias")?),
        )?;
        let out = dropout(&out, cfg.hidden_dropout, rng.as_deref_mut())?;
        x = layer_norm(
            &(out + x1)?,
            &lp("output.LayerNorm.weight")?,
            &lp("output.LayerNorm.bias")?,
            cfg.layer_norm_eps,
        )?;
    }

    let flat = x.reshape((b * l, d))?;
    let cls1_idx: Vec<u32> = (0..b).map(|i| (i * l) as u32).collect();
    let cls2_idx: Vec<u32> = batch
        .cls2_pos
        .iter()
        .enumerate()
        .map(|(i, &p)| (i * l + p) as u32)
        .collect();
    let cls1 = flat.index_select(&Tensor::new(cls1_idx, &dev)?, 0)?;
    let cls2 = flat.index_select(&Tensor::new(cls2_idx, &dev)?, 0)?;
    Ok(EncodedBatch {
        hidden: x,
        cls1,
        cls2,
        mask: batch.attention_mask.to_dtype(DType::F32)?,
    })
}
