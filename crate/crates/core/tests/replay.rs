//! Remote judge paths exercised offline against recorded exchanges.

use std::path::PathBuf;

use semunc::formats::read_jsonl;
use semunc::providers::remote::ReplayTransport;
use semunc::providers::{disambiguate, EndpointConfig, ProviderError};
use semunc::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn judge() -> LlmJudge {
    let cfg = EndpointConfig {
        url: "http://judge.invalid/v1/chat/completions".into(),
        model: "judge-large".into(),
        backoff_base_ms: 0,
        ..Default::default()
    };
    LlmJudge::new(cfg, Box::new(ReplayTransport::from_path(fixture("replay_exchanges.jsonl")).unwrap()))
}

fn record() -> GenerationRecord {
    read_jsonl::<GenerationRecord>(fixture("replay_dataset.jsonl")).unwrap().remove(0)
}

#[test]
fn replayed_similarities_build_the_recorded_system() {
    let sys = assemble_system(&record(), &judge(), &SimilarityTask::default(), AssemblyOptions::default()).unwrap();
    assert_eq!(sys.w_ii.values_row_major(), vec![1.0, 0.3, 0.3, 1.0]);
    // answers 0, 1, 4 share the text "1204"; 3 and 5 share "1873"
    assert_eq!(sys.w_rr.get(0, 1), 1.0);
    assert_eq!(sys.w_rr.get(0, 4), 1.0);
    assert_eq!(sys.w_rr.get(3, 5), 1.0);
    assert_eq!(sys.w_rr.get(0, 2), 0.1);
    let r = decompose(&sys, &SpectralConfig::default()).unwrap();
    assert!(r.h_cond >= 0.0);
}

#[test]
fn replay_is_deterministic() {
    let a = assemble_system(&record(), &judge(), &SimilarityTask::default(), AssemblyOptions::default()).unwrap();
    let b = assemble_system(&record(), &judge(), &SimilarityTask::default(), AssemblyOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn replayed_verdicts_label_the_question() {
    // 4 of 6 answers match their own interpretation's gold answer
    let rec = record();
    assert!(!label_failure(&rec, 0.6, &judge()).unwrap());
    assert!(label_failure(&rec, 0.8, &judge()).unwrap());
}

#[test]
fn replayed_disambiguation_converges_in_two_rounds() {
    let t = disambiguate("How many patients have AD?", &judge(), 3).unwrap();
    assert_eq!(t.rounds.len(), 2);
    assert!(t.converged);
    assert_eq!(t.rounds[0].ambiguity_score, 0.6);
    assert_eq!(t.final_question(), "How many unique patients have an AD diagnosis at any time in their history?");
}

#[test]
fn unrecorded_request_is_a_replay_miss() {
    let mut rec = record();
    rec.answers[2].text = "1199".into();
    let err = assemble_system(&rec, &judge(), &SimilarityTask::default(), AssemblyOptions::default()).unwrap_err();
    assert!(matches!(err, GraphError::Provider { source: ProviderError::ReplayMiss, .. }), "{err:?}");
}
