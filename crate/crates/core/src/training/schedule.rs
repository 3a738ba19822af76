use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TriggerSpan;
use crate::encoder::Backbone;
use crate::error::{Result, TrendError};

/// Teacher-forcing probabilities: the chance of feeding the gold gate or
/// gold span to the relation path instead of the model's own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub tf_trigger: f64,
    pub tf_gate: f64,
}

impl ScheduleConfig {
    pub fn for_backbone(backbone: Backbone) -> Self {
        match backbone {
            Backbone::Large => ScheduleConfig {
                tf_trigger: 0.5,
                tf_gate: 0.7,
            },
            Backbone::Tiny | Backbone::Base => ScheduleConfig {
                tf_trigger: 0.7,
                tf_gate: 0.7,
            },
        }
    }

    /// Always the model's own predictions.
    pub const PREDICTED_ONLY: ScheduleConfig = ScheduleConfig {
        tf_trigger: 0.0,
        tf_gate: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("tf_trigger", self.tf_trigger), ("tf_gate", self.tf_gate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(TrendError::Config(format!(
                    "{name} must lie in [0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Gate and span handed to fusion for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selection {
    pub gate: bool,
    pub span: TriggerSpan,
    pub gold_gate_used: bool,
    pub gold_span_drawn: bool,
    /// A predicted (non-gold) span reached fusion.
    pub predicted_span_fed: bool,
}

/// Counts of scheduled-sampling outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleStats {
    pub instances: u64,
    pub gold_gate_used: u64,
    pub gold_span_drawn: u64,
    pub predicted_span_fed: u64,
    pub empty_span_fed: u64,
}

impl ScheduleStats {
    pub fn record(&mut self, s: &Selection) {
        self.instances += 1;
        self.gold_gate_used += u64::from(s.gold_gate_used);
        self.gold_span_drawn += u64::from(s.gold_span_drawn);
        self.predicted_span_fed += u64::from(s.predicted_span_fed);
        self.empty_span_fed += u64::from(!s.span.exists);
    }

    pub fn merge(&mut self, other: &ScheduleStats) {
        self.instances += other.instances;
        self.gold_gate_used += other.gold_gate_used;
        self.gold_span_drawn += other.gold_span_drawn;
        self.predicted_span_fed += other.predicted_span_fed;
        self.empty_span_fed += other.empty_span_fed;
    }
}

/// Chooses gold or predicted gate and span, each by an independent draw.
///
/// `predicted` is the span decoded as if the gate were open. The chosen gate
/// decides between an empty and a non-empty trigger; when it is open but the
/// chosen gold span is empty, the predicted span is used.
pub fn scheduled_select(
    gold: TriggerSpan,
    predicted: TriggerSpan,
    gold_gate: bool,
    predicted_gate: bool,
    schedule: &ScheduleConfig,
    rng: &mut ChaCha8Rng,
) -> Selection {
    let gold_gate_used = rng.random_bool(schedule.tf_gate);
    let gold_span_drawn = rng.random_bool(schedule.tf_trigger);
    let gate = if gold_gate_used {
        gold_gate
    } else {
        predicted_gate
    };
    let (span, predicted_span_fed) = if !gate {
        (TriggerSpan::EMPTY, false)
    } else if gold_span_drawn && gold.exists {
        (gold, false)
    } else {
        (predicted, true)
    };
    Selection {
        gate,
        span,
        gold_gate_used,
        gold_span_drawn,
        predicted_span_fed,
    }
}
