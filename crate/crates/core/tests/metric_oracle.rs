mod support;

use std::path::PathBuf;

use trend_core::RelationOntology;

#[test]
fn metrics_match_the_reference_on_random_cases() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../ontologies/ddrel.toml");
    let ontology = RelationOntology::from_file(&path).unwrap();
    for seed in 0..300 {
        let r = support::oracle::run_case(seed, &ontology);
        assert!(r.exact, "case {seed} disagrees with the reference");
        assert!(r.monotone, "case {seed} breaks coarsening monotonicity");
    }
}
