use std::time::Instant;

use candle_core::backprop::GradStore;
use candle_core::Var;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{joint_loss, scalar, JointLoss, LossWeights};
use super::schedule::{scheduled_select, ScheduleConfig, ScheduleStats};
use crate::corpus::TokenizedInstance;
use crate::encoder::Backbone;
use crate::error::{Result, TrendError};
use crate::evaluation::{dev_metrics, DevMetrics, RelationOntology};
use crate::model::TrendModel;

const SHUFFLE_STREAM: u64 = 0;
const SCHEDULE_STREAM: u64 = 1;
const DROPOUT_STREAM: u64 = 2;

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub schedule: ScheduleConfig,
    pub backbone: Backbone,
    /// Rescale gradients to this global L2 norm when exceeded.
    pub grad_clip: Option<f64>,
    /// Parameters whose names start with any of these are not updated.
    pub frozen_prefixes: Vec<String>,
    /// Treat every gate decision as open.
    pub force_gate_on: bool,
}

impl TrainConfig {
    pub fn new(backbone: Backbone) -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            epochs: 30,
            batch_size: 8,
            seed: 42,
            weights: LossWeights::default(),
            schedule: ScheduleConfig::for_backbone(backbone),
            backbone,
            grad_clip: None,
            frozen_prefixes: Vec::new(),
            force_gate_on: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrendError::Config("epochs must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrendError::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrendError::Config("batch_size must be > 0".into()));
        }
        if let Some(c) = self.grad_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(TrendError::Config(format!(
                    "grad_clip must be > 0, got {c}"
                )));
            }
        }
        self.weights.validate()?;
        self.schedule.validate()
    }

    fn is_frozen(&self, name: &str) -> bool {
        self.frozen_prefixes
            .iter()
            .any(|p| name.starts_with(p.as_str()))
    }
}

/// Mean component losses over the steps of an epoch; `None` for components
/// that were never computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub total: f64,
    pub trigger: Option<f64>,
    pub relation: Option<f64>,
    pub binary: Option<f64>,
}

/// One line of the metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub loss: LossRecord,
    pub weights: LossWeights,
    pub schedule: ScheduleStats,
    pub dev: Option<DevMetrics>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub log: Vec<EpochRecord>,
    /// Wall-clock seconds per epoch, kept apart from the reproducible log.
    pub epoch_seconds: Vec<f64>,
}

/// Forward and backward pass over one batch.
pub struct StepOutput {
    pub loss: JointLoss,
    pub grads: GradStore,
    pub stats: ScheduleStats,
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Computes the joint loss of `batch` and its gradients.
pub fn step_gradients(
    model: &TrendModel,
    batch: &[&TokenizedInstance],
    cfg: &TrainConfig,
    schedule_rng: &mut ChaCha8Rng,
    dropout_rng: &mut ChaCha8Rng,
) -> Result<StepOutput> {
    let tensors = model.batch(batch)?;
    let acts = model.activations(&tensors, Some(dropout_rng))?;
    let decoded = model.decode(&acts, batch, cfg.force_gate_on)?;
    let mut stats = ScheduleStats::default();
    let spans: Vec<_> = batch
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let sel = scheduled_select(
                inst.gold_trigger,
                decoded.spans_if_open[i],
                inst.gate_label,
                decoded.gates[i],
                &cfg.schedule,
                schedule_rng,
            );
            stats.record(&sel);
            sel.span
        })
        .collect();
    let relation_logits = model.relation_logits(&acts, &spans)?;
    let loss = joint_loss(
        &acts.gate_logits,
        &acts.start_logits,
        &acts.end_logits,
        &relation_logits,
        batch,
        &cfg.weights,
    )?;
    let grads = loss.total.backward()?;
    Ok(StepOutput { loss, grads, stats })
}

fn clip_gradients(grads: &mut GradStore, vars: &[Var], max_norm: f64) -> Result<()> {
    let mut sq = 0.0;
    for v in vars {
        if let Some(g) = grads.get(v.as_tensor()) {
            sq += scalar(&g.sqr()?.sum_all()?)?;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.get(v.as_tensor()) {
                let scaled = g.affine(scale, 0.0)?;
                grads.insert(v.as_tensor(), scaled);
            }
        }
    }
    Ok(())
}

fn check_labels(model: &TrendModel, data: &[TokenizedInstance]) -> Result<()> {
    for inst in data {
        match inst.relation_label {
            Some(r) if r < model.num_relations => {}
            Some(r) => {
                return Err(TrendError::Ontology(format!(
                    "instance {} has relation id {r} but the head has {} outputs",
                    inst.id, model.num_relations
                )))
            }
            None => {
                return Err(TrendError::InvalidInput(format!(
                    "instance {} has no relation label",
                    inst.id
                )))
            }
        }
    }
    Ok(())
}

#[derive(Default)]
struct Accumulator {
    steps: usize,
    total: f64,
    parts: [(f64, usize); 3],
}

impl Accumulator {
    fn add(&mut self, loss: &JointLoss) -> Result<()> {
        self.steps += 1;
        self.total += scalar(&loss.total)?;
        for (slot, part) in self
            .parts
            .iter_mut()
            .zip([&loss.trigger, &loss.relation, &loss.binary])
        {
            if let Some(t) = part {
                slot.0 += scalar(t)?;
                slot.1 += 1;
            }
        }
        Ok(())
    }

    fn record(&self) -> LossRecord {
        let mean = |(sum, n): (f64, usize)| (n > 0).then(|| sum / n as f64);
        LossRecord {
            total: self.total / self.steps.max(1) as f64,
            trigger: mean(self.parts[0]),
            relation: mean(self.parts[1]),
            binary: mean(self.parts[2]),
        }
    }
}

/// Trains `model` in place for exactly `cfg.epochs` epochs. `on_epoch` sees
/// each log record as soon as it is complete.
pub fn fit(
    model: &mut TrendModel,
    train: &[TokenizedInstance],
    dev: Option<&[TokenizedInstance]>,
    ontology: &RelationOntology,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord) -> Result<()>,
) -> Result<FitResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrendError::InvalidInput("training set is empty".into()));
    }
    if ontology.len() != model.num_relations {
        return Err(TrendError::Ontology(format!(
            "ontology {} has {} labels but the relation head has {} outputs",
            ontology.name,
            ontology.len(),
            model.num_relations
        )));
    }
    check_labels(model, train)?;
    if let Some(dev) = dev {
        check_labels(model, dev)?;
    }
    let trainable = model.store.vars_where(|n| !cfg.is_frozen(n));
    if trainable.is_empty() {
        return Err(TrendError::Config("every parameter is frozen".into()));
    }
    let mut opt = AdamW::new(
        trainable.clone(),
        ParamsAdamW {
            lr: cfg.learning_rate,
            weight_decay: 0.0,
            ..ParamsAdamW::default()
        },
    )?;
    let mut shuffle_rng = stream_rng(cfg.seed, SHUFFLE_STREAM);
    let mut schedule_rng = stream_rng(cfg.seed, SCHEDULE_STREAM);
    let mut dropout_rng = stream_rng(cfg.seed, DROPOUT_STREAM);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut result = FitResult {
        log: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut acc = Accumulator::default();
        let mut stats = ScheduleStats::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TokenizedInstance> = chunk.iter().map(|&i| &train[i]).collect();
            let mut step = step_gradients(model, &batch, cfg, &mut schedule_rng, &mut dropout_rng)?;
            if let Some(max_norm) = cfg.grad_clip {
                clip_gradients(&mut step.grads, &trainable, max_norm)?;
            }
            opt.step(&step.grads)?;
            acc.add(&step.loss)?;
            stats.merge(&step.stats);
        }
        let dev_scores = match dev {
            Some(d) if !d.is_empty() => {
                let preds = model.predict(d, cfg.batch_size, cfg.force_gate_on)?;
                Some(dev_metrics(&preds, d, ontology)?)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            steps: acc.steps,
            loss: acc.record(),
            weights: cfg.weights,
            schedule: stats,
            dev: dev_scores,
        };
        on_epoch(&record)?;
        result.log.push(record);
        result.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(result)
}
