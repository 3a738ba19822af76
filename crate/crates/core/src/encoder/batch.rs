use candle_core::{Device, Tensor};

use crate::corpus::TokenizedInstance;
use crate::error::{Result, TrendError};

/// Padded encoder inputs for a group of instances.
#[derive(Debug, Clone)]
pub struct Batch {
    /// (batch, seq) token ids, padded with the pad id
    pub ids: Tensor,
    /// (batch, seq): 0 for `[CLS] D [SEP]`, 1 for the query suffix and padding
    pub type_ids: Tensor,
    /// (batch, seq) u8, 1 for real tokens
    pub attention_mask: Tensor,
    /// (batch, seq) u8, 1 on dialogue tokens
    pub dialogue_mask: Tensor,
    pub lengths: Vec<usize>,
    pub cls2_pos: Vec<usize>,
    pub seq_len: usize,
}

impl Batch {
    pub fn new(instances: &[&TokenizedInstance], pad_id: u32, device: &Device) -> Result<Self> {
        if instances.is_empty() {
            return Err(TrendError::InvalidInput("empty batch".into()));
        }
        let seq_len = instances.iter().map(|i| i.len()).max().unwrap_or(0);
        let b = instances.len();
        let mut ids = Vec::with_capacity(b * seq_len);
        let mut types = Vec::with_capacity(b * seq_len);
        let mut attn = Vec::with_capacity(b * seq_len);
        let mut dia = Vec::with_capacity(b * seq_len);
        for inst in instances {
            for j in 0..seq_len {
                let real = j < inst.len();
                ids.push(if real { inst.token_ids[j] } else { pad_id });
                types.push(u32::from(j > inst.sep_pos));
                attn.push(u8::from(real));
                dia.push(u8::from(real && inst.dialogue_mask[j]));
            }
        }
        Ok(Batch {
            ids: Tensor::from_vec(ids, (b, seq_len), device)?,
            type_ids: Tensor::from_vec(types, (b, seq_len), device)?,
            attention_mask: Tensor::from_vec(attn, (b, seq_len), device)?,
            dialogue_mask: Tensor::from_vec(dia, (b, seq_len), device)?,
            lengths: instances.iter().map(|i| i.len()).collect(),
            cls2_pos: instances.iter().map(|i| i.cls2_pos).collect(),
            seq_len,
        })
    }

    pub fn size(&self) -> usize {
        self.lengths.len()
    }
}
