//! Trigger-enhanced dialogue relation extraction.
//!
//! The crate covers the whole pipeline: corpus loading and tokenization
//! ([`corpus`]), the transformer encoder ([`encoder`]) and task heads
//! ([`heads`]), joint training ([`training`]), transfer to corpora without
//! trigger annotations ([`transfer`]), scoring ([`evaluation`]) and
//! checkpoint persistence ([`checkpoint`]).

pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod model;
pub mod params;
pub mod synthetic;
pub mod training;
pub mod transfer;

pub use corpus::{DialogueExample, TokenizedInstance, TriggerSpan};
pub use encoder::{Backbone, EncoderConfig};
pub use error::{Result, TrendError};
pub use evaluation::RelationOntology;
pub use heads::ModelOutput;
pub use model::{InstancePrediction, TrendModel};
