mod common;

use semunc::synth::{plant_scenario, ScenarioKind, ScenarioSpec};
use semunc::{decompose, SpectralConfig};

fn seed42() -> semunc::synth::PlantedScenario {
    let spec = ScenarioSpec { noise: 0.1, ..ScenarioSpec::new(ScenarioKind::Compound, 42) };
    plant_scenario(&spec).unwrap()
}

#[test]
fn seed42_compound_matches_reference_implementation() {
    let p = seed42();
    let s = &p.system;
    let w_ii = common::from_row_major(s.n_interpretations(), &s.w_ii.values_row_major());
    let w_rr = common::from_row_major(s.n_answers(), &s.w_rr.values_row_major());
    let oracle = common::decompose(&w_ii, &w_rr, &s.parents, 10.0, 1e-3);
    let r = decompose(s, &SpectralConfig::default()).unwrap();
    println!("h_i={:?} h_r={:?} h_joint={:?} h_cond={:?}", oracle.h_i, oracle.h_r, oracle.h_joint, oracle.h_cond);
    assert!((r.h_i - oracle.h_i).abs() < 1e-9);
    assert!((r.h_r - oracle.h_r).abs() < 1e-9);
    assert!((r.h_joint - oracle.h_joint).abs() < 1e-9);
    assert!((r.h_naive - (oracle.h_joint - oracle.h_i)).abs() < 1e-9);
    assert!((r.h_cond - oracle.h_cond).abs() < 1e-9);
}

// Frozen from the reference implementation above; guards the seeded
// generator and the decomposition together.
const GOLDEN: [(&str, f64); 5] = [
    ("h_i", 1.268_594_072_657_386_6),
    ("h_r", 2.508_592_926_495_118_6),
    ("h_joint", 1.080_056_220_907_691),
    ("h_naive", 1.080_056_220_907_691 - 1.268_594_072_657_386_6),
    ("h_cond", 2.964_028_172_711_212_8),
];

#[test]
fn seed42_compound_golden_values() {
    let r = decompose(&seed42().system, &SpectralConfig::default()).unwrap();
    let got = [r.h_i, r.h_r, r.h_joint, r.h_naive, r.h_cond];
    for ((name, want), got) in GOLDEN.iter().zip(got) {
        assert!((got - want).abs() < 1e-9, "{name}: {got} vs {want}");
    }
}
