//! Seeded inputs shared by the benchmarks in `benches/`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semunc::synth::{plant_scenario, ScenarioKind, ScenarioSpec};
use semunc::BipartiteSystem;

/// Noisy compound system with `n` interpretations and `m` answers each.
pub fn system(n: usize, m: usize, seed: u64) -> BipartiteSystem {
    let spec = ScenarioSpec {
        n_interpretations: n,
        answers_per_interpretation: m,
        noise: 0.2,
        ..ScenarioSpec::new(ScenarioKind::Compound, seed)
    };
    plant_scenario(&spec).expect("valid spec").system
}

/// Scores with failures shifted upward, both classes present.
pub fn scores(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<bool> = (0..n).map(|k| k % 3 == 0).collect();
    let scores = labels.iter().map(|&f| rng.gen_range(0.0..1.0) + if f { 0.3 } else { 0.0 }).collect();
    (scores, labels)
}
