//! Encoder plus task heads, with batched prediction.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenizedInstance, TriggerSpan, PAD};
use crate::encoder::{self, Backbone, Batch, EncodedBatch, EncoderConfig};
use crate::error::{Result, TrendError};
use crate::heads::{self, ModelOutput};
use crate::params::ParamStore;

/// The full network and the settings needed to run it.
#[derive(Debug, Clone)]
pub struct TrendModel {
    pub store: ParamStore,
    pub encoder: EncoderConfig,
    pub backbone: Backbone,
    pub num_relations: usize,
    pub max_span_len: usize,
    pub pad_id: u32,
}

/// Head activations for a batch, before relation prediction.
#[derive(Debug, Clone)]
pub struct HeadActivations {
    pub encoded: EncodedBatch,
    /// (batch,)
    pub gate_logits: Tensor,
    /// (batch, seq), `-inf` off the dialogue region
    pub start_logits: Tensor,
    pub end_logits: Tensor,
}

/// Everything predicted for one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePrediction {
    pub id: String,
    pub relation: usize,
    pub gate: bool,
    pub span: TriggerSpan,
    pub output: ModelOutput,
}

impl TrendModel {
    /// Randomly initialized encoder and heads from `seed`.
    pub fn random(
        encoder: EncoderConfig,
        backbone: Backbone,
        num_relations: usize,
        max_span_len: usize,
        pad_id: u32,
        seed: u64,
    ) -> Result<Self> {
        encoder.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(DType::F32, Device::Cpu);
        encoder::init_random(&mut store, &encoder, &mut rng)?;
        heads::init_heads(&mut store, encoder.hidden_size, num_relations, &mut rng)?;
        Ok(TrendModel {
            store,
            encoder,
            backbone,
            num_relations,
            max_span_len,
            pad_id,
        })
    }

    /// Pretrained encoder weights with freshly initialized heads.
    pub fn with_encoder(
        mut store: ParamStore,
        encoder: EncoderConfig,
        backbone: Backbone,
        num_relations: usize,
        max_span_len: usize,
        pad_id: u32,
        seed: u64,
    ) -> Result<Self> {
        encoder::check_parameters(&store, &encoder)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        heads::init_heads(&mut store, encoder.hidden_size, num_relations, &mut rng)?;
        Ok(TrendModel {
            store,
            encoder,
            backbone,
            num_relations,
            max_span_len,
            pad_id,
        })
    }

    /// Model from a stored parameter set; checks every tensor shape.
    pub fn from_store(
        store: ParamStore,
        encoder: EncoderConfig,
        backbone: Backbone,
        max_span_len: usize,
        pad_id: u32,
    ) -> Result<Self> {
        encoder::check_parameters(&store, &encoder)?;
        let d = encoder.hidden_size;
        for (name, shape) in [
            (heads::GATE_WEIGHT, vec![1, d]),
            (heads::START_WEIGHT, vec![1, d]),
            (heads::END_WEIGHT, vec![1, d]),
            (heads::NULL_TRIGGER, vec![d]),
        ] {
            if store.get(name)?.dims() != shape.as_slice() {
                return Err(TrendError::Checkpoint(format!(
                    "parameter {name} has the wrong shape"
                )));
            }
        }
        let w = store.get(heads::RELATION_WEIGHT)?;
        let (num_relations, inputs) = w.dims2()?;
        if inputs != 2 * d || store.get(heads::RELATION_BIAS)?.dims() != [num_relations] {
            return Err(TrendError::Checkpoint(
                "relation head does not match the encoder width".into(),
            ));
        }
        Ok(TrendModel {
            store,
            encoder,
            backbone,
            num_relations,
            max_span_len,
            pad_id,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size
    }

    pub fn batch(&self, instances: &[&TokenizedInstance]) -> Result<Batch> {
        Batch::new(instances, self.pad_id, self.store.device())
    }

    /// Encoder, gate and span heads. `rng` enables dropout.
    pub fn activations(
        &self,
        batch: &Batch,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<HeadActivations> {
        let encoded = encoder::encode(&self.store, &self.encoder, batch, rng)?;
        let gate_logits = heads::gate_forward(&self.store, &encoded.cls2)?;
        let (start_logits, end_logits) =
            heads::span_forward(&self.store, &encoded.hidden, &batch.dialogue_mask)?;
        Ok(HeadActivations {
            encoded,
            gate_logits,
            start_logits,
            end_logits,
        })
    }

    /// Relation logits (batch, |R|) when fusing the given spans.
    pub fn relation_logits(&self, acts: &HeadActivations, spans: &[TriggerSpan]) -> Result<Tensor> {
        let fused =
            heads::fuse_batch(&self.store, &acts.encoded.hidden, &acts.encoded.cls1, spans)?;
        heads::relation_forward(&self.store, &fused, &acts.encoded.cls1)
    }

    /// Gate decisions and spans decoded from the model's own outputs.
    ///
    /// `spans_if_open` holds the span decoded as if the gate were open, which
    /// scheduled sampling needs even when the gate is closed.
    pub fn decode(
        &self,
        acts: &HeadActivations,
        instances: &[&TokenizedInstance],
        force_gate_on: bool,
    ) -> Result<Decoded> {
        let gate_logits = acts.gate_logits.to_dtype(DType::F32)?.to_vec1::<f32>()?;
        let starts = acts.start_logits.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        let ends = acts.end_logits.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        let mut out = Decoded::default();
        for (i, inst) in instances.iter().enumerate() {
            let n = inst.len();
            let gate = force_gate_on || heads::gate_decision(gate_logits[i]);
            let open = heads::decode_span(
                &starts[i][..n],
                &ends[i][..n],
                &inst.dialogue_mask,
                true,
                self.max_span_len,
            )?;
            out.gates.push(gate);
            out.spans_if_open.push(open);
            out.spans.push(if gate { open } else { TriggerSpan::EMPTY });
        }
        out.gate_logits = gate_logits;
        out.start_logits = starts;
        out.end_logits = ends;
        Ok(out)
    }

    /// Inference over `instances` in batches of `batch_size`.
    pub fn predict(
        &self,
        instances: &[TokenizedInstance],
        batch_size: usize,
        force_gate_on: bool,
    ) -> Result<Vec<InstancePrediction>> {
        let mut out = Vec::with_capacity(instances.len());
        for chunk in instances.chunks(batch_size.max(1)) {
            let refs: Vec<&TokenizedInstance> = chunk.iter().collect();
            let batch = self.batch(&refs)?;
            let acts = self.activations(&batch, None)?;
            let decoded = self.decode(&acts, &refs, force_gate_on)?;
            let logits = self
                .relation_logits(&acts, &decoded.spans)?
                .to_dtype(DType::F32)?
                .to_vec2::<f32>()?;
            for (i, inst) in refs.iter().enumerate() {
                let n = inst.len();
                let relation = heads::masked_argmax(&logits[i], |_| true).unwrap_or(0);
                out.push(InstancePrediction {
                    id: inst.id.clone(),
                    relation,
                    gate: decoded.gates[i],
                    span: decoded.spans[i],
                    output: ModelOutput {
                        gate_logit: decoded.gate_logits[i],
                        start_logits: decoded.start_logits[i][..n].to_vec(),
                        end_logits: decoded.end_logits[i][..n].to_vec(),
                        relation_logits: logits[i].clone(),
                    },
                });
            }
        }
        Ok(out)
    }
}

/// Per-instance decisions taken from a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Decoded {
    pub gates: Vec<bool>,
    pub spans: Vec<TriggerSpan>,
    pub spans_if_open: Vec<TriggerSpan>,
    pub gate_logits: Vec<f32>,
    pub start_logits: Vec<Vec<f32>>,
    pub end_logits: Vec<Vec<f32>>,
}

/// Pad id of a vocabulary.
pub fn pad_id(tokenizer: &crate::corpus::SubwordTokenizer) -> u32 {
    tokenizer.special_id(PAD)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetTag, TokenOffset};

    fn instance(len: usize, seed: u32) -> TokenizedInstance {
        let sep = len - 4;
        TokenizedInstance {
            id: format!("i{seed}"),
            token_ids: (0..len as u32).map(|i| 5 + (i * 7 + seed) % 30).collect(),
            tokens: vec!["x".into(); len],
            offset_map: vec![TokenOffset::Special; len],
            cls1_pos: 0,
            sep_pos: sep,
            cls2_pos: len - 2,
            dialogue_mask: (0..len).map(|i| 0 < i && i < sep).collect(),
            gold_trigger: TriggerSpan::EMPTY,
            trigger_alternatives: vec![],
            gate_label: false,
            relation_label: Some(0),
            dataset_tag: DatasetTag::TriggerFree,
            dropped_turns: 0,
        }
    }

    #[test]
    fn prediction_shapes_and_batching() {
        let model =
            TrendModel::random(EncoderConfig::tiny(40), Backbone::Tiny, 5, 10, 0, 1).unwrap();
        let data = vec![instance(12, 1), instance(9, 2), instance(15, 3)];
        let all = model.predict(&data, 8, false).unwrap();
        let one_by_one = model.predict(&data, 1, false).unwrap();
        assert_eq!(all.len(), 3);
        for (a, b) in all.iter().zip(&one_by_one) {
            assert_eq!(a.relation, b.relation);
            assert_eq!(a.gate, b.gate);
            assert_eq!(a.output.relation_logits.len(), 5);
            assert_eq!(
                a.output.start_logits.len(),
                data.iter().find(|d| d.id == a.id).unwrap().len()
            );
            for (x, y) in a
                .output
                .relation_logits
                .iter()
                .zip(&b.output.relation_logits)
            {
                assert!((x - y).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn forced_gate_always_yields_a_span() {
        let model =
            TrendModel::random(EncoderConfig::tiny(40), Backbone::Tiny, 3, 10, 0, 2).unwrap();
        let data = vec![instance(12, 1), instance(9, 2)];
        for p in model.predict(&data, 4, true).unwrap() {
            assert!(p.gate && p.span.exists);
        }
    }

    #[test]
    fn from_store_checks_shapes() {
        let model =
            TrendModel::random(EncoderConfig::tiny(40), Backbone::Tiny, 3, 10, 0, 2).unwrap();
        let back = TrendModel::from_store(
            model.store.clone(),
            model.encoder.clone(),
            Backbone::Tiny,
            10,
            0,
        )
        .unwrap();
        assert_eq!(back.num_relations, 3);
        let mut bad = model.store.clone();
        bad.remove(heads::NULL_TRIGGER);
        assert!(TrendModel::from_store(bad, model.encoder.clone(), Backbone::Tiny, 10, 0).is_err());
    }
}
