//! Multi-module flows: synthetic records through providers, decomposition,
//! regimes and evaluation.

use semunc::decomposition::{tau_sweep, DEFAULT_TAU_GRID};
use semunc::eval::{evaluate, negative_fraction};
use semunc::providers::MatrixProvider;
use semunc::regimes::{ab_analysis, regime_table};
use semunc::synth::{balanced_batch, naive_negativity_witness, plant_scenario, scenario_records, ScenarioKind, ScenarioSpec};
use semunc::*;

#[test]
fn matrix_file_reproduces_planted_blocks() {
    let batch = balanced_batch(3, 0.2, 7).unwrap();
    let (records, matrices): (Vec<_>, Vec<_>) =
        batch.iter().enumerate().map(|(k, p)| scenario_records(p, &format!("q{k:03}"))).unzip();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    semunc::formats::write_jsonl(&path, &matrices).unwrap();
    let provider = MatrixProvider::from_path(&path).unwrap();
    for (p, rec) in batch.iter().zip(&records) {
        let sys = assemble_system(rec, &provider, &SimilarityTask::default(), AssemblyOptions::default()).unwrap();
        assert_eq!(sys.w_ii, p.system.w_ii);
        assert_eq!(sys.w_rr, p.system.w_rr);
    }
}

#[test]
fn mock_provider_reproduces_noise_free_archetypes() {
    for kind in ScenarioKind::ALL {
        let p = plant_scenario(&ScenarioSpec::new(kind, 3)).unwrap();
        let (rec, _) = scenario_records(&p, "q");
        let sys = assemble_system(&rec, &MockProvider::new(0), &SimilarityTask::default(), AssemblyOptions::default())
            .unwrap();
        assert_eq!(sys.w_ii, p.system.w_ii, "{kind}");
        assert_eq!(sys.w_rr, p.system.w_rr, "{kind}");
    }
}

#[test]
fn h_cond_outranks_h_r_where_it_separates_by_construction() {
    // successes: diverse answers fully explained by distinct interpretations;
    // failures: fewer answers, but unstable under a single reading
    let mut systems = Vec::new();
    let mut failures = Vec::new();
    for seed in 0..40 {
        let ok = ScenarioSpec { noise: 0.05, ..ScenarioSpec::new(ScenarioKind::Ambiguity, seed) };
        let bad = ScenarioSpec {
            n_interpretations: 2,
            answers_per_interpretation: 1,
            noise: 0.05,
            ..ScenarioSpec::new(ScenarioKind::Instability, 1000 + seed)
        };
        systems.push(plant_scenario(&ok).unwrap().system);
        failures.push(false);
        systems.push(plant_scenario(&bad).unwrap().system);
        failures.push(true);
    }
    let rows = tau_sweep(&systems, &failures, &DEFAULT_TAU_GRID, &SpectralConfig::default()).unwrap();
    let at10 = rows.iter().find(|r| r.tau == 10.0).unwrap();
    assert!(at10.h_cond > at10.h_r, "{at10:?}");
    assert_eq!(rows.len(), DEFAULT_TAU_GRID.len());
}

#[test]
fn batch_evaluation_summary() {
    let batch = balanced_batch(25, 0.1, 11).unwrap();
    let cfg = SpectralConfig::default();
    let reports: Vec<EntropyReport> = batch.iter().map(|p| decompose(&p.system, &cfg).unwrap()).collect();
    let failures: Vec<bool> =
        batch.iter().map(|p| matches!(p.expected.regime, Regime::Instability | Regime::Compound)).collect();
    let summary = evaluate(&reports, &failures, &EvaluationConfig { bootstrap_b: 200, seed: 5, ..Default::default() }).unwrap();
    assert_eq!(summary.n, 100);
    assert_eq!(summary.n_failures, 50);
    let h_cond = summary.metric("h_cond").unwrap();
    assert!(h_cond.auroc > 0.9, "{h_cond:?}");
    assert!(h_cond.ci_lo <= h_cond.auroc && h_cond.auroc <= h_cond.ci_hi);

    let th = fit_thresholds(&reports).unwrap();
    let table = regime_table(&reports, &failures, &th).unwrap();
    assert_eq!(table.total.total(), 100);
    // every high-h_r question here is a planted failure
    assert_eq!(ab_analysis(&reports, &failures, &th), Err(semunc::regimes::RegimeError::SingleClass));
}

#[test]
fn witness_shows_up_in_negative_fraction() {
    let w = naive_negativity_witness(semunc::synth::WITNESS_BUDGET).unwrap();
    let cfg = SpectralConfig::default();
    let mut reports = vec![decompose(&w, &cfg).unwrap()];
    reports.extend(balanced_batch(1, 0.0, 0).unwrap().iter().map(|p| decompose(&p.system, &cfg).unwrap()));
    assert!(negative_fraction(&reports).unwrap() > 0.0);
}
