use candle_core::{DType, Tensor, D};
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedInstance;
use crate::encoder::log_softmax_last;
use crate::error::{Result, TrendError};

/// Coefficients of the three losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub w_trigger: f64,
    pub w_relation: f64,
    pub w_binary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_trigger: 0.3,
            w_relation: 1.0,
            w_binary: 1.0,
        }
    }
}

impl LossWeights {
    /// Relation loss only.
    pub const RELATION_ONLY: LossWeights = LossWeights {
        w_trigger: 0.0,
        w_relation: 1.0,
        w_binary: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("w_trigger", self.w_trigger),
            ("w_relation", self.w_relation),
            ("w_binary", self.w_binary),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(TrendError::Config(format!(
                    "{name} must be a finite value >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Weighted sum of scalar component losses.
    pub fn combine(&self, trigger: f64, relation: f64, binary: f64) -> f64 {
        self.w_trigger * trigger + self.w_relation * relation + self.w_binary * binary
    }

    /// Weighted sum of scalar loss tensors; absent components count as 0.
    pub fn combine_tensors(
        &self,
        trigger: Option<&Tensor>,
        relation: Option<&Tensor>,
        binary: Option<&Tensor>,
    ) -> Result<Tensor> {
        let parts: Vec<Tensor> = [
            (trigger, self.w_trigger),
            (relation, self.w_relation),
            (binary, self.w_binary),
        ]
        .into_iter()
        .filter_map(|(t, w)| t.map(|t| t.affine(w, 0.0)))
        .collect::<candle_core::Result<_>>()?;
        let mut iter = parts.into_iter();
        let first = match iter.next() {
            Some(t) => t,
            None => {
                return Err(TrendError::InvalidInput(
                    "no loss component to combine".into(),
                ))
            }
        };
        Ok(iter.try_fold(first, |acc, t| acc + t)?)
    }
}

/// Scalar loss tensors of one batch. A component is `None` when its weight
/// is zero and it was not computed.
#[derive(Debug, Clone)]
pub struct JointLoss {
    pub total: Tensor,
    pub trigger: Option<Tensor>,
    pub relation: Option<Tensor>,
    pub binary: Option<Tensor>,
}

/// Mean of `relu(x) - x*y + log(1 + exp(-|x|))`.
pub fn binary_cross_entropy(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let softplus = logits.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    let loss = ((logits.relu()? - logits.mul(targets)?)? + softplus)?;
    Ok(loss.mean_all()?)
}

/// Per-row cross-entropy (rows,) of `logits` (rows, classes) against `targets`.
pub fn cross_entropy_rows(logits: &Tensor, targets: &[u32]) -> Result<Tensor> {
    let idx = Tensor::new(targets, logits.device())?.unsqueeze(1)?;
    let picked = log_softmax_last(logits)?
        .gather(&idx, D::Minus1)?
        .squeeze(1)?;
    Ok(picked.neg()?)
}

/// Trigger pointer loss: mean over instances with a gold trigger of the
/// average start/end cross-entropy; `None` when no instance has one.
pub fn trigger_loss(
    start_logits: &Tensor,
    end_logits: &Tensor,
    golds: &[&TokenizedInstance],
) -> Result<Option<Tensor>> {
    let rows: Vec<u32> = golds
        .iter()
        .enumerate()
        .filter(|(_, g)| g.gate_label)
        .map(|(i, _)| i as u32)
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let idx = Tensor::new(rows.as_slice(), start_logits.device())?;
    let starts: Vec<u32> = rows
        .iter()
        .map(|&i| golds[i as usize].gold_trigger.start as u32)
        .collect();
    let ends: Vec<u32> = rows
        .iter()
        .map(|&i| golds[i as usize].gold_trigger.end as u32)
        .collect();
    let ce_start = cross_entropy_rows(&start_logits.index_select(&idx, 0)?, &starts)?;
    let ce_end = cross_entropy_rows(&end_logits.index_select(&idx, 0)?, &ends)?;
    Ok(Some(((ce_start + ce_end)? * 0.5)?.mean_all()?))
}

/// Weighted joint objective of one batch.
pub fn joint_loss(
    gate_logits: &Tensor,
    start_logits: &Tensor,
    end_logits: &Tensor,
    relation_logits: &Tensor,
    golds: &[&TokenizedInstance],
    weights: &LossWeights,
) -> Result<JointLoss> {
    let (_, num_relations) = relation_logits.dims2()?;
    for g in golds {
        if g.gate_label && !g.gold_trigger.exists {
            return Err(TrendError::InvalidInput(format!(
                "instance {} is marked explicit but has no gold span",
                g.id
            )));
        }
    }
    let trigger = if weights.w_trigger > 0.0 {
        trigger_loss(start_logits, end_logits, golds)?
    } else {
        None
    };
    let relation = if weights.w_relation > 0.0 {
        let labels = golds
            .iter()
            .map(|g| match g.relation_label {
                Some(r) if r < num_relations => Ok(r as u32),
                Some(r) => Err(TrendError::Ontology(format!(
                    "instance {} has relation id {r} but the head has {num_relations} outputs",
                    g.id
                ))),
                None => Err(TrendError::InvalidInput(format!(
                    "instance {} has no relation label",
                    g.id
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Some(cross_entropy_rows(relation_logits, &labels)?.mean_all()?)
    } else {
        None
    };
    let binary = if weights.w_binary > 0.0 {
        let targets: Vec<f32> = golds
            .iter()
            .map(|g| f32::from(u8::from(g.gate_label)))
            .collect();
        let targets = Tensor::new(targets, gate_logits.device())?.to_dtype(gate_logits.dtype())?;
        Some(binary_cross_entropy(gate_logits, &targets)?)
    } else {
        None
    };
    let total = if trigger.is_none() && relation.is_none() && binary.is_none() {
        Tensor::zeros((), gate_logits.dtype(), gate_logits.device())?
    } else {
        weights.combine_tensors(trigger.as_ref(), relation.as_ref(), binary.as_ref())?
    };
    Ok(JointLoss {
        total,
        trigger,
        relation,
        binary,
    })
}

pub fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DatasetTag, TokenOffset, TriggerSpan};
    use candle_core::Device;

    fn t64(v: &[f64], shape: &[usize]) -> Tensor {
        Tensor::from_vec(v.to_vec(), shape, &Device::Cpu).unwrap()
    }

    fn gold(gate: bool, span: (i64, i64), relation: usize) -> TokenizedInstance {
        let gold_trigger = if gate {
            TriggerSpan::new(span.0 as usize, span.1 as usize)
        } else {
            TriggerSpan::EMPTY
        };
        TokenizedInstance {
            id: "g".into(),
            token_ids: vec![0; 4],
            tokens: vec![String::new(); 4],
            offset_map: vec![TokenOffset::Special; 4],
            cls1_pos: 0,
            sep_pos: 3,
            cls2_pos: 3,
            dialogue_mask: vec![false, true, true, false],
            gold_trigger,
            trigger_alternatives: vec![],
            gate_label: gate,
            relation_label: Some(relation),
            dataset_tag: DatasetTag::TriggerAnnotated,
            dropped_turns: 0,
        }
    }

    #[test]
    fn weighted_combination_of_known_components() {
        let w = LossWeights::default();
        assert_eq!(w.combine(2.0, 1.0, 0.5), 2.1);
        let total = w
            .combine_tensors(
                Some(&t64(&[2.0], &[])),
                Some(&t64(&[1.0], &[])),
                Some(&t64(&[0.5], &[])),
            )
            .unwrap();
        assert_eq!(scalar(&total).unwrap(), 2.1);
        let zero = LossWeights {
            w_trigger: 0.0,
            w_relation: 0.0,
            w_binary: 0.0,
        };
        assert_eq!(zero.combine(2.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn stable_bce_matches_the_naive_formula() {
        let x = [-3.0, -0.2, 0.0, 0.7, 4.0];
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let got = scalar(&binary_cross_entropy(&t64(&x, &[5]), &t64(&y, &[5])).unwrap()).unwrap();
        let naive: f64 = x
            .iter()
            .zip(&y)
            .map(|(x, y)| {
                let p = 1.0 / (1.0 + (-x).exp());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 5.0;
        assert!((got - naive).abs() < 1e-12);
        // no overflow for large logits
        let big = scalar(&binary_cross_entropy(&t64(&[800.0], &[1]), &t64(&[0.0], &[1])).unwrap())
            .unwrap();
        assert_eq!(big, 800.0);
    }

    #[test]
    fn trigger_loss_skips_implicit_instances() {
        let inf = f64::NEG_INFINITY;
        let logits = t64(&[inf, 1.0, 2.0, inf, inf, 0.5, -0.5, inf], &[2, 4]);
        let a = gold(true, (1, 2), 0);
        let b = gold(false, (0, 0), 0);
        let got = scalar(&trigger_loss(&logits, &logits, &[&a, &b]).unwrap().unwrap()).unwrap();
        let lse = (1.0f64.exp() + 2.0f64.exp()).ln();
        let oracle = ((lse - 1.0) + (lse - 2.0)) / 2.0;
        assert!((got - oracle).abs() < 1e-12);
        assert!(trigger_loss(&logits, &logits, &[&b, &b]).unwrap().is_none());
    }

    #[test]
    fn no_explicit_trigger_means_no_trigger_term() {
        let inf = f64::NEG_INFINITY;
        let span = t64(&[inf, 1.0, 2.0, inf], &[1, 4]);
        let rel = t64(&[0.3, -0.3], &[1, 2]);
        let gate = t64(&[0.1], &[1]);
        let b = gold(false, (0, 0), 1);
        let with = joint_loss(&gate, &span, &span, &rel, &[&b], &LossWeights::default()).unwrap();
        let without = joint_loss(
            &gate,
            &span,
            &span,
            &rel,
            &[&b],
            &LossWeights {
                w_trigger: 0.0,
                ..LossWeights::default()
            },
        )
        .unwrap();
        assert_eq!(
            scalar(&with.total).unwrap(),
            scalar(&without.total).unwrap()
        );
    }

    #[test]
    fn joint_loss_is_linear_in_each_weight() {
        let inf = f64::NEG_INFINITY;
        let span = t64(&[inf, 1.0, 2.0, inf, inf, 0.3, 0.1, inf], &[2, 4]);
        let rel = t64(&[0.3, -0.3, 1.2, 0.4], &[2, 2]);
        let gate = t64(&[0.1, -2.0], &[2]);
        let a = gold(true, (1, 2), 0);
        let b = gold(false, (0, 0), 1);
        let base = LossWeights::default();
        let eval = |w: LossWeights| {
            scalar(
                &joint_loss(&gate, &span, &span, &rel, &[&a, &b], &w)
                    .unwrap()
                    .total,
            )
            .unwrap()
        };
        let parts = joint_loss(&gate, &span, &span, &rel, &[&a, &b], &base).unwrap();
        let (lt, lr, lb) = (
            scalar(parts.trigger.as_ref().unwrap()).unwrap(),
            scalar(parts.relation.as_ref().unwrap()).unwrap(),
            scalar(parts.binary.as_ref().unwrap()).unwrap(),
        );
        let l0 = eval(base);
        let eps = 1e-12;
        let l = eval(LossWeights {
            w_trigger: 2.0 * base.w_trigger,
            ..base
        });
        assert!((l - l0 - base.w_trigger * lt).abs() < eps);
        let l = eval(LossWeights {
            w_relation: 2.0 * base.w_relation,
            ..base
        });
        assert!((l - l0 - base.w_relation * lr).abs() < eps);
        let l = eval(LossWeights {
            w_binary: 2.0 * base.w_binary,
            ..base
        });
        assert!((l - l0 - base.w_binary * lb).abs() < eps);
        let zero = LossWeights {
            w_trigger: 0.0,
            w_relation: 0.0,
            w_binary: 0.0,
        };
        assert_eq!(eval(zero), 0.0);
    }

    #[test]
    fn inconsistent_gold_is_rejected() {
        let mut a = gold(true, (1, 2), 0);
        a.gold_trigger = TriggerSpan::EMPTY;
        let span = t64(&[0.0; 4], &[1, 4]);
        let rel = t64(&[0.0; 2], &[1, 2]);
        let gate = t64(&[0.0], &[1]);
        assert!(joint_loss(&gate, &span, &span, &rel, &[&a], &LossWeights::default()).is_err());
        let c = gold(false, (0, 0), 5);
        assert!(joint_loss(&gate, &span, &span, &rel, &[&c], &LossWeights::default()).is_err());
    }
}
