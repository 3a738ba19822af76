//! Moving a trained model to a corpus without trigger annotations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{DatasetTag, TokenizedInstance};
use crate::error::{Result, TrendError};
use crate::evaluation::RelationOntology;
use crate::heads::{self, TRIGGER_PATH_PREFIXES};
use crate::model::TrendModel;
use crate::training::{fit, EpochRecord, FitResult, LossWeights, ScheduleConfig, TrainConfig};

/// Copy of `source` with a fresh relation head sized to `target`.
pub fn reinit_relation_head(
    source: &TrendModel,
    target: &RelationOntology,
    seed: u64,
) -> Result<TrendModel> {
    if target.is_empty() {
        return Err(TrendError::Ontology(format!(
            "target ontology {} has no labels",
            target.name
        )));
    }
    let mut model = source.clone();
    model.store = source.store.deep_clone()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.hidden_size();
    heads::init_relation_head(&mut model.store, d, target.len(), &mut rng)?;
    model.num_relations = target.len();
    Ok(model)
}

/// Settings actually used for fine-tuning: relation loss only, the model's own
/// gate and spans, and optionally a frozen trigger path.
pub fn fine_tune_config(base: &TrainConfig, freeze_trigger_path: bool) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.weights = LossWeights::RELATION_ONLY;
    cfg.schedule = ScheduleConfig::PREDICTED_ONLY;
    if freeze_trigger_path {
        for p in TRIGGER_PATH_PREFIXES {
            if !cfg.frozen_prefixes.iter().any(|f| f == p) {
                cfg.frozen_prefixes.push(p.to_string());
            }
        }
    }
    cfg
}

/// Rejects instances that carry trigger annotations.
pub fn check_trigger_free(instances: &[TokenizedInstance]) -> Result<()> {
    match instances.iter().find(|i| {
        i.dataset_tag == DatasetTag::TriggerAnnotated
            || i.gate_label
            || !i.trigger_alternatives.is_empty()
    }) {
        Some(i) => Err(TrendError::InvalidInput(format!(
            "instance {} carries trigger annotations; transfer expects a trigger-free corpus",
            i.id
        ))),
        None => Ok(()),
    }
}

/// Fine-tunes `model` on the target corpus with the relation loss alone.
pub fn fine_tune(
    model: &mut TrendModel,
    train: &[TokenizedInstance],
    dev: Option<&[TokenizedInstance]>,
    ontology: &RelationOntology,
    base: &TrainConfig,
    freeze_trigger_path: bool,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<FitResult> {
    check_trigger_free(train)?;
    if let Some(dev) = dev {
        check_trigger_free(dev)?;
    }
    let cfg = fine_tune_config(base, freeze_trigger_path);
    fit(model, train, dev, ontology, &cfg, on_epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{TokenOffset, TriggerSpan};
    use crate::encoder::{Backbone, EncoderConfig};
    use crate::heads::RELATION_HEAD_PREFIX;
    use crate::training::{step_gradients, stream_rng};

    fn ontology(n: usize) -> RelationOntology {
        RelationOntology::new("t", (0..n).map(|i| format!("r{i}")).collect()).unwrap()
    }

    fn instance(id: usize, label: usize) -> TokenizedInstance {
        let len = 12;
        let sep = 8;
        TokenizedInstance {
            id: format!("i{id}"),
            token_ids: (0..len as u32)
                .map(|i| 5 + (i * 3 + id as u32 * 7) % 30)
                .collect(),
            tokens: vec!["x".into(); len],
            offset_map: vec![TokenOffset::Special; len],
            cls1_pos: 0,
            sep_pos: sep,
            cls2_pos: 10,
            dialogue_mask: (0..len).map(|i| 0 < i && i < sep).collect(),
            gold_trigger: TriggerSpan::EMPTY,
            trigger_alternatives: vec![],
            gate_label: false,
            relation_label: Some(label),
            dataset_tag: DatasetTag::TriggerFree,
            dropped_turns: 0,
        }
    }

    fn source() -> TrendModel {
        TrendModel::random(EncoderConfig::tiny(40), Backbone::Tiny, 6, 10, 0, 5).unwrap()
    }

    #[test]
    fn reinit_preserves_everything_but_the_head() {
        let src = source();
        let target = ontology(4);
        let a = reinit_relation_head(&src, &target, 9).unwrap();
        let b = reinit_relation_head(&src, &target, 9).unwrap();
        assert_eq!(a.num_relations, 4);
        assert_eq!(
            a.store.get(heads::RELATION_WEIGHT).unwrap().dims(),
            &[4, 32]
        );
        let before = src.store.checksums().unwrap();
        let after = a.store.checksums().unwrap();
        for (name, sum) in &before {
            if !name.starts_with(RELATION_HEAD_PREFIX) {
                assert_eq!(after.get(name), Some(sum), "{name}");
            }
        }
        assert_eq!(a.store.checksums().unwrap(), b.store.checksums().unwrap());
        // same label count still gets a fresh head
        let same = reinit_relation_head(&src, &ontology(6), 9).unwrap();
        assert_ne!(
            same.store.checksum(heads::RELATION_WEIGHT).unwrap(),
            before[heads::RELATION_WEIGHT]
        );
        assert!(reinit_relation_head(
            &src,
            &RelationOntology {
                labels: vec![],
                ..ontology(1)
            },
            9
        )
        .is_err());
    }

    #[test]
    fn relation_loss_sends_no_gradient_to_the_trigger_path() {
        let model = reinit_relation_head(&source(), &ontology(3), 1).unwrap();
        let data: Vec<_> = (0..4).map(|i| instance(i, i % 3)).collect();
        let refs: Vec<_> = data.iter().collect();
        let cfg = fine_tune_config(&TrainConfig::new(Backbone::Tiny), false);
        let out = step_gradients(
            &model,
            &refs,
            &cfg,
            &mut stream_rng(0, 1),
            &mut stream_rng(0, 2),
        )
        .unwrap();
        for name in model.store.names() {
            let is_trigger_path = TRIGGER_PATH_PREFIXES.iter().any(|p| name.starts_with(p));
            let grad = out.grads.get(model.store.var(name).unwrap().as_tensor());
            if is_trigger_path {
                if let Some(g) = grad {
                    let max = g
                        .abs()
                        .unwrap()
                        .max_all()
                        .unwrap()
                        .to_scalar::<f32>()
                        .unwrap();
                    assert_eq!(max, 0.0, "{name}");
                }
            } else if name.starts_with(RELATION_HEAD_PREFIX) {
                assert!(grad.is_some());
            }
        }
    }

    #[test]
    fn frozen_trigger_path_is_unchanged_by_fine_tuning() {
        let mut model = reinit_relation_head(&source(), &ontology(3), 1).unwrap();
        let data: Vec<_> = (0..6).map(|i| instance(i, i % 3)).collect();
        let before = model.store.checksums().unwrap();
        let mut cfg = TrainConfig::new(Backbone::Tiny);
        cfg.epochs = 2;
        cfg.learning_rate = 1e-2;
        let log = fine_tune(
            &mut model,
            &data,
            None,
            &ontology(3),
            &cfg,
            true,
            &mut |_| Ok(()),
        )
        .unwrap();
        for rec in &log.log {
            assert_eq!(rec.weights.w_trigger, 0.0);
            assert_eq!(rec.weights.w_binary, 0.0);
            assert!(rec.loss.trigger.is_none() && rec.loss.binary.is_none());
        }
        let after = model.store.checksums().unwrap();
        for (name, sum) in &before {
            let frozen = TRIGGER_PATH_PREFIXES.iter().any(|p| name.starts_with(p));
            if frozen {
                assert_eq!(&after[name], sum, "{name}");
            }
        }
        assert_ne!(
            after[heads::RELATION_WEIGHT],
            before[heads::RELATION_WEIGHT]
        );
    }

    #[test]
    fn annotated_target_is_rejected() {
        let mut model = reinit_relation_head(&source(), &ontology(3), 1).unwrap();
        let mut data = vec![instance(0, 0)];
        data[0].dataset_tag = DatasetTag::TriggerAnnotated;
        let cfg = TrainConfig::new(Backbone::Tiny);
        assert!(fine_tune(
            &mut model,
            &data,
            None,
            &ontology(3),
            &cfg,
            true,
            &mut |_| Ok(())
        )
        .is_err());
    }
}
