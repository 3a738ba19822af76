//! Shared inputs for the benchmarks.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trend_core::corpus::{
    corpus_texts, load_corpus, prepare_corpus, AdapterConfig, CorpusFormat, InstanceBuilder,
    SubwordTokenizer,
};
use trend_core::model::pad_id;
use trend_core::{Backbone, EncoderConfig, RelationOntology, TokenizedInstance, TrendModel};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join(rel)
}

/// Start logits, end logits and a dialogue mask of `len` positions.
pub fn span_inputs(len: usize, seed: u64) -> (Vec<f32>, Vec<f32>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    let end = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mask = (0..len).map(|i| i > 0 && i < len - len / 8).collect();
    (start, end, mask)
}

/// `n` uniform values in [-1, 1).
pub fn uniform(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A randomly initialized tiny model and the annotated fixture's instances.
pub fn tiny_setup() -> (TrendModel, Vec<TokenizedInstance>) {
    let ontology =
        RelationOntology::from_file(&repo_path("ontologies/dialogre.toml")).expect("ontology");
    let adapter = AdapterConfig::new(CorpusFormat::TriggerAnnotated);
    let raw = load_corpus(
        &repo_path("fixtures/trigger_annotated.json"),
        &adapter,
        &ontology,
    )
    .expect("fixture");
    let examples = prepare_corpus(&raw, 9, true).expect("prepared");
    let texts = corpus_texts(&examples);
    let vocab =
        SubwordTokenizer::build_vocab(texts.iter().map(String::as_str), true, 9).expect("vocab");
    let tokenizer = SubwordTokenizer::from_vocab(vocab, true, 9).expect("tokenizer");
    let instances = InstanceBuilder::new(&tokenizer, &ontology, 128)
        .build_all(&examples)
        .expect("instances");
    let model = TrendModel::random(
        EncoderConfig::tiny(tokenizer.vocab_size()),
        Backbone::Tiny,
        ontology.len(),
        10,
        pad_id(&tokenizer),
        1,
    )
    .expect("model");
    (model, instances)
}
