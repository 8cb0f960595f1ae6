use std::path::PathBuf;

use fce_core::materials::Corpus;
use fce_core::parsing::load_labeled_cases;

fn corpus_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/parser_corpus.toml")
}

#[test]
fn labeled_corpus_agrees_fully() {
    let cases = load_labeled_cases(&corpus_path()).unwrap();
    assert!(cases.len() >= 50, "only {} cases", cases.len());
    let failures: Vec<String> = cases
        .iter()
        .filter_map(|c| c.check(Corpus::builtin()).err())
        .collect();
    assert!(
        failures.is_empty(),
        "{} disagreements:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
