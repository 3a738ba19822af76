//! Scoring: relation F1, accuracy and macro-F per granularity, seen/unseen
//! partitions, gate accuracy and trigger exact match.

mod metrics;
mod ontology;
mod report;

pub use metrics::{
    accuracy_and_macro_f, gate_accuracy, micro_f1, seen_unseen_f1, trigger_exact_match,
    SeenUnseenF1,
};
pub use ontology::{Partition, RelationOntology};
pub use report::{
    dev_metrics, evaluate, prediction_records, read_predictions, span_text, write_predictions,
    DevMetrics, EvaluationReport, GranularityScores, PredictionRecord, IMPLICIT,
};
