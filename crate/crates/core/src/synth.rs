//! Planted-structure systems, closed-form reference entropies, and seeded
//! random families for validating the decomposition without a model or a
//! dataset.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{self, DecompositionError};
use crate::graph::{Answer, BipartiteSystem, GenerationRecord, GraphError, Interpretation};
use crate::providers::{DenseBlock, ItemIds, MatrixRecord};
use crate::regimes::{Regime, RegimeLabel};
use crate::spectral::{self, SpectralConfig, SymMatrix};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("invalid structure: {0}")]
    InvalidStructure(String),
    #[error("no system with h_naive < 0 within a budget of {0} draws")]
    BudgetExhausted(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Confident,
    Ambiguity,
    Instability,
    Compound,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] =
        [ScenarioKind::Confident, ScenarioKind::Ambiguity, ScenarioKind::Instability, ScenarioKind::Compound];

    pub fn expected_regime(self) -> Regime {
        match self {
            ScenarioKind::Confident => Regime::Confident,
            ScenarioKind::Ambiguity => Regime::Ambiguity,
            ScenarioKind::Instability => Regime::Instability,
            ScenarioKind::Compound => Regime::Compound,
        }
    }

    /// Per-answer probability of being path-correct in simulated datasets.
    fn answer_accuracy(self) -> f64 {
        match self {
            ScenarioKind::Confident => 0.97,
            ScenarioKind::Ambiguity => 0.85,
            ScenarioKind::Instability => 0.75,
            ScenarioKind::Compound => 0.6,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioKind::Confident => "confident",
            ScenarioKind::Ambiguity => "ambiguity",
            ScenarioKind::Instability => "instability",
            ScenarioKind::Compound => "compound",
        };
        f.write_str(s)
    }
}

impl FromStr for ScenarioKind {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| SynthError::InvalidSpec(format!("unknown scenario kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n_interpretations: usize,
    pub answers_per_interpretation: usize,
    /// Half-width of the uniform off-diagonal perturbation, in `[0, 0.5)`.
    pub noise: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        ScenarioSpec { kind, n_interpretations: 3, answers_per_interpretation: 3, noise: 0.0, seed }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_interpretations < 2 {
            return Err(SynthError::InvalidSpec(format!("N must be >= 2 (got {})", self.n_interpretations)));
        }
        if self.answers_per_interpretation < 1 {
            return Err(SynthError::InvalidSpec("M must be >= 1".into()));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(SynthError::InvalidSpec(format!("noise must be in [0, 0.5) (got {})", self.noise)));
        }
        Ok(())
    }

    /// Class label of each interpretation and each answer in the noise-0
    /// archetype; equal labels mean similarity 1, distinct labels 0.
    fn class_labels(&self) -> (Vec<usize>, Vec<usize>) {
        let (n, m) = (self.n_interpretations, self.answers_per_interpretation);
        let interp: Vec<usize> = match self.kind {
            ScenarioKind::Confident | ScenarioKind::Instability => vec![0; n],
            ScenarioKind::Ambiguity | ScenarioKind::Compound => (0..n).collect(),
        };
        let answers: Vec<usize> = match self.kind {
            ScenarioKind::Confident => vec![0; n * m],
            ScenarioKind::Ambiguity => (0..n * m).map(|j| j / m).collect(),
            ScenarioKind::Instability | ScenarioKind::Compound => (0..n * m).collect(),
        };
        (interp, answers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedScenario {
    pub spec: ScenarioSpec,
    pub system: BipartiteSystem,
    pub expected: RegimeLabel,
}

fn label_matrix(labels: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(labels.len(), labels.len(), |i, j| if labels[i] == labels[j] { 1.0 } else { 0.0 })
}

/// Adds `U(-noise, noise)` to each off-diagonal pair (upper triangle drawn,
/// mirrored) and clamps into `[0, 1]`.
fn perturb(mut m: DMatrix<f64>, noise: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    if noise > 0.0 {
        let n = m.nrows();
        for i in 0..n {
            for j in i + 1..n {
                let v = (m[(i, j)] + rng.gen_range(-noise..noise)).clamp(0.0, 1.0);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    SymMatrix::from_matrix(m).expect("mirrored matrix is symmetric")
}

fn blocked_parents(n: usize, m: usize) -> Vec<usize> {
    (0..n * m).map(|j| j / m).collect()
}

/// Builds the archetype for `spec.kind` and its expected regime.
///
/// | kind        | `W_II`   | `W_RR`                              |
/// |-------------|----------|-------------------------------------|
/// | confident   | all-ones | all-ones                            |
/// | ambiguity   | identity | all-ones block per interpretation   |
/// | instability | all-ones | identity                            |
/// | compound    | identity | identity                            |
pub fn plant_scenario(spec: &ScenarioSpec) -> Result<PlantedScenario, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (interp, answers) = spec.class_labels();
    let w_ii = perturb(label_matrix(&interp), spec.noise, &mut rng);
    let w_rr = perturb(label_matrix(&answers), spec.noise, &mut rng);
    let qid = format!("{}-{}", spec.kind, spec.seed);
    let system =
        BipartiteSystem::new(qid, w_ii, w_rr, blocked_parents(spec.n_interpretations, spec.answers_per_interpretation))?;
    Ok(PlantedScenario { spec: *spec, system, expected: spec.kind.expected_regime().into() })
}

/// A balanced batch: `per_kind` scenarios of each kind, kinds interleaved,
/// seeds `base_seed, base_seed + 1, ...`.
pub fn balanced_batch(per_kind: usize, noise: f64, base_seed: u64) -> Result<Vec<PlantedScenario>, SynthError> {
    (0..per_kind * 4)
        .map(|k| {
            let spec = ScenarioSpec { noise, ..ScenarioSpec::new(ScenarioKind::ALL[k % 4], base_seed + k as u64) };
            plant_scenario(&spec)
        })
        .collect()
}

/// Dataset and matrix-file records for a planted scenario.
///
/// Texts encode the noise-0 class structure with one token per class, so
/// token-overlap providers reproduce the archetype exactly; the matrix record
/// carries the (possibly perturbed) blocks. Answers carry `correct` flags
/// drawn with a kind-dependent accuracy.
pub fn scenario_records(scenario: &PlantedScenario, question_id: &str) -> (GenerationRecord, MatrixRecord) {
    let spec = &scenario.spec;
    let (interp_labels, answer_labels) = spec.class_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let interpretations: Vec<Interpretation> = interp_labels
        .iter()
        .enumerate()
        .map(|(i, c)| Interpretation { id: format!("i{i}"), text: format!("interpretation{c}"), gold_answer: None })
        .collect();
    let answers: Vec<Answer> = answer_labels
        .iter()
        .enumerate()
        .map(|(j, c)| Answer {
            id: Some(format!("r{j}")),
            interpretation_id: format!("i{}", j / spec.answers_per_interpretation),
            text: format!("answer{c}"),
            correct: Some(rng.gen_bool(spec.kind.answer_accuracy())),
        })
        .collect();
    let mut meta = std::collections::BTreeMap::new();
    meta.insert("scenario".to_string(), serde_json::to_value(spec).expect("serialisable spec"));
    let record = GenerationRecord {
        question_id: question_id.to_string(),
        question: format!("synthetic {} question {}", spec.kind, spec.seed),
        interpretations,
        answers,
        meta,
    };
    let matrix = MatrixRecord {
        question_id: question_id.to_string(),
        item_ids: ItemIds {
            interpretations: record.interpretations.iter().map(|i| i.id.clone()).collect(),
            answers: record.answer_ids(),
        },
        w_ii: DenseBlock::from_sym(&scenario.system.w_ii),
        w_rr: DenseBlock::from_sym(&scenario.system.w_rr),
    };
    (record, matrix)
}

/// Seed for the `index`-th question of a run seeded with `seed`.
pub fn question_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.next_u64()
}

/// Similarity structures with closed-form Laplacian spectra.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    AllOnes(usize),
    Identity(usize),
    /// `k` disjoint all-ones blocks of size `b`.
    EqualBlocks { k: usize, b: usize },
}

impl Structure {
    pub fn matrix(&self) -> SymMatrix {
        match *self {
            Structure::AllOnes(n) => SymMatrix::ones(n),
            Structure::Identity(n) => SymMatrix::identity(n),
            Structure::EqualBlocks { k, b } => SymMatrix::block_ones(&vec![b; k]),
        }
    }

    /// Laplacian eigenvalues as `(value, multiplicity)`.
    fn laplacian_spectrum(&self) -> Vec<(f64, usize)> {
        match *self {
            Structure::AllOnes(n) => vec![(0.0, 1), (n as f64, n - 1)],
            Structure::Identity(n) => vec![(0.0, n)],
            Structure::EqualBlocks { k, b } => vec![(0.0, k), (b as f64, k * (b - 1))],
        }
    }
}

/// Heat-kernel entropy (bits) of `structure` from its closed-form Laplacian
/// spectrum, without any eigendecomposition.
pub fn exact_reference_entropy(structure: Structure, tau: f64) -> Result<f64, SynthError> {
    let ok = match structure {
        Structure::AllOnes(n) | Structure::Identity(n) => n >= 1,
        Structure::EqualBlocks { k, b } => k >= 1 && b >= 1,
    };
    if !ok {
        return Err(SynthError::InvalidStructure(format!("{structure:?}")));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(SynthError::InvalidStructure(format!("tau must be positive and finite (got {tau})")));
    }
    let spectrum: Vec<(f64, usize)> = structure.laplacian_spectrum().into_iter().filter(|&(_, c)| c > 0).collect();
    let z: f64 = spectrum.iter().map(|&(l, c)| c as f64 * (-tau * l).exp()).sum();
    Ok(spectrum
        .iter()
        .map(|&(l, c)| {
            let p = (-tau * l).exp() / z;
            if p > 0.0 {
                -(c as f64) * p * p.log2()
            } else {
                0.0
            }
        })
        .sum())
}

fn random_block(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    let mut m = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = rng.gen_range(0.0..=1.0) * scale;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    SymMatrix::from_matrix(m).expect("mirrored matrix is symmetric")
}

/// System with i.i.d. `U(0, 1)` off-diagonal similarities and `m` answers
/// per interpretation.
pub fn random_system(n: usize, m: usize, rng: &mut ChaCha8Rng) -> BipartiteSystem {
    let w_ii = random_block(n, 1.0, rng);
    let w_rr = random_block(n * m, 1.0, rng);
    BipartiteSystem::new("random", w_ii, w_rr, blocked_parents(n, m)).expect("valid random blocks")
}

pub const WITNESS_SEED: u64 = 0x5eed;
pub const WITNESS_BUDGET: usize = 10_000;

/// Searches seeded random systems (N = 3, M = 3, τ = 10) for one whose naive
/// conditional entropy `h_joint - h_i` is negative. Each draw scales the two
/// blocks by independent `U(0, 1)` factors so sparse and dense blocks are
/// both explored.
pub fn naive_negativity_witness(budget: usize) -> Result<BipartiteSystem, SynthError> {
    let cfg = SpectralConfig::with_tau(10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(WITNESS_SEED);
    for draw in 0..budget {
        let (s_ii, s_rr) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let w_ii = random_block(3, s_ii, &mut rng);
        let w_rr = random_block(9, s_rr, &mut rng);
        let system = BipartiteSystem::new(format!("witness-{draw}"), w_ii, w_rr, blocked_parents(3, 3))?;
        if decomposition::decompose(&system, &cfg)?.h_naive < 0.0 {
            return Ok(system);
        }
    }
    Err(SynthError::BudgetExhausted(budget))
}

/// Probability that a generated answer reproduces its interpretation's
/// canonical result in [`clinical_system`].
pub const CLINICAL_MATCH_PROB: f64 = 0.7;

/// Judge-verdict shaped system: similarities are binary equivalence
/// verdicts. Each interpretation falls in one of `n` equivalence classes
/// (interpretations sharing a class compile to the same query); each answer
/// reproduces its interpretation's canonical result with probability
/// `p_match` and is otherwise a distinct wrong result.
pub fn clinical_system(n: usize, m: usize, p_match: f64, rng: &mut ChaCha8Rng) -> BipartiteSystem {
    let classes: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut next_unique = n;
    let answers: Vec<usize> = (0..n * m)
        .map(|j| {
            if rng.gen_bool(p_match) {
                classes[j / m]
            } else {
                next_unique += 1;
                next_unique
            }
        })
        .collect();
    let w_ii = SymMatrix::from_matrix(label_matrix(&classes)).expect("symmetric");
    let w_rr = SymMatrix::from_matrix(label_matrix(&answers)).expect("symmetric");
    BipartiteSystem::new("clinical", w_ii, w_rr, blocked_parents(n, m)).expect("valid blocks")
}

/// `count` clinical-shaped systems with N drawn from {2, 3} and M = 3.
pub fn clinical_family(count: usize, seed: u64) -> Vec<BipartiteSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let n = if rng.gen_bool(0.5) { 2 } else { 3 };
            let mut s = clinical_system(n, 3, CLINICAL_MATCH_PROB, &mut rng);
            s.question_id = format!("clinical-{k}");
            s
        })
        .collect()
}

/// Coefficient of variation (population standard deviation over mean) of
/// `h_cond` across `taus`. Zero when `h_cond` vanishes at every τ.
pub fn h_cond_tau_cv(system: &BipartiteSystem, taus: &[f64], base: &SpectralConfig) -> Result<f64, SynthError> {
    let values = taus
        .iter()
        .map(|&tau| {
            let cfg = SpectralConfig { tau, ..*base };
            let schur = spectral::schur_complement(&system.w_rr, &system.w_ir(), &system.w_ii, cfg.epsilon)
                .map_err(DecompositionError::from)?;
            spectral::residual_entropy(&schur.matrix, &cfg).map_err(|e| SynthError::from(DecompositionError::from(e)))
        })
        .collect::<Result<Vec<f64>, SynthError>>()?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean <= 1e-12 {
        return Ok(0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Ok(var.sqrt() / mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::{classify, fit_thresholds};

    #[test]
    fn ambiguity_archetype_has_log_n_ambiguity() {
        let spec = ScenarioSpec::new(ScenarioKind::Ambiguity, 1);
        let p = plant_scenario(&spec).unwrap();
        let r = decomposition::decompose(&p.system, &SpectralConfig::default()).unwrap();
        assert_eq!(r.h_i, 3f64.log2());
    }

    #[test]
    fn confident_archetype_is_near_zero() {
        let p = plant_scenario(&ScenarioSpec::new(ScenarioKind::Confident, 1)).unwrap();
        let r = decomposition::decompose(&p.system, &SpectralConfig::default()).unwrap();
        assert!(r.h_i < 1e-3);
        assert_eq!(p.expected.regime, Regime::Confident);
    }

    #[test]
    fn planting_is_deterministic() {
        let spec = ScenarioSpec { noise: 0.2, ..ScenarioSpec::new(ScenarioKind::Compound, 5) };
        assert_eq!(plant_scenario(&spec).unwrap(), plant_scenario(&spec).unwrap());
        let other = ScenarioSpec { seed: 6, ..spec };
        assert_ne!(plant_scenario(&spec).unwrap().system, plant_scenario(&other).unwrap().system);
    }

    #[test]
    fn invalid_specs() {
        let base = ScenarioSpec::new(ScenarioKind::Confident, 0);
        for bad in [
            ScenarioSpec { noise: 0.6, ..base },
            ScenarioSpec { noise: 0.5, ..base },
            ScenarioSpec { noise: -0.1, ..base },
            ScenarioSpec { n_interpretations: 1, ..base },
            ScenarioSpec { answers_per_interpretation: 0, ..base },
        ] {
            assert!(matches!(plant_scenario(&bad), Err(SynthError::InvalidSpec(_))), "{bad:?}");
        }
        assert!("mixed".parse::<ScenarioKind>().is_err());
        assert_eq!("compound".parse::<ScenarioKind>().unwrap(), ScenarioKind::Compound);
    }

    #[test]
    fn reference_entropy_examples() {
        assert!((exact_reference_entropy(Structure::Identity(3), 7.0).unwrap() - 3f64.log2()).abs() < 1e-15);
        let h = exact_reference_entropy(Structure::EqualBlocks { k: 2, b: 2 }, 10.0).unwrap();
        assert!((h - 1.0).abs() < 1e-6);
        assert!(exact_reference_entropy(Structure::AllOnes(0), 1.0).is_err());
        assert!(exact_reference_entropy(Structure::AllOnes(3), 0.0).is_err());
    }

    #[test]
    fn reference_matches_kle_entropy() {
        for n in 2..=12 {
            for tau in [1.0, 2.0, 5.0, 10.0, 20.0] {
                let mut structures = vec![Structure::AllOnes(n), Structure::Identity(n)];
                for b in 1..=n {
                    if n % b == 0 {
                        structures.push(Structure::EqualBlocks { k: n / b, b });
                    }
                }
                for s in structures {
                    let exact = exact_reference_entropy(s, tau).unwrap();
                    let numeric = spectral::kle_entropy(&s.matrix(), &SpectralConfig::with_tau(tau)).unwrap();
                    assert!((exact - numeric).abs() < 1e-9, "{s:?} tau={tau}: {exact} vs {numeric}");
                }
            }
        }
    }

    #[test]
    fn witness_search() {
        let w = naive_negativity_witness(WITNESS_BUDGET).unwrap();
        let r = decomposition::decompose(&w, &SpectralConfig::default()).unwrap();
        assert!(r.h_naive < 0.0);
        assert!(r.h_cond >= 0.0);
        assert!(matches!(naive_negativity_witness(0), Err(SynthError::BudgetExhausted(0))));
    }

    #[test]
    fn noise_free_batch_recovers_regimes() {
        let batch = balanced_batch(10, 0.0, 100).unwrap();
        let cfg = SpectralConfig::default();
        let reports: Vec<_> = batch.iter().map(|p| decomposition::decompose(&p.system, &cfg).unwrap()).collect();
        let th = fit_thresholds(&reports).unwrap();
        for (p, r) in batch.iter().zip(&reports) {
            assert_eq!(classify(r, &th), p.expected, "{}", r.question_id);
        }
    }

    #[test]
    fn scenario_records_are_consistent() {
        let p = plant_scenario(&ScenarioSpec::new(ScenarioKind::Ambiguity, 3)).unwrap();
        let (rec, mat) = scenario_records(&p, "q0");
        rec.validate().unwrap();
        assert_eq!(rec.answers.len(), 9);
        assert_eq!(mat.item_ids.answers, rec.answer_ids());
        assert_eq!(mat.w_rr.values, p.system.w_rr.values_row_major());
    }

    #[test]
    fn clinical_systems_are_binary() {
        let fam = clinical_family(20, 1);
        assert_eq!(fam.len(), 20);
        for s in &fam {
            assert!(s.w_rr.values_row_major().iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(s.n_answers(), 3 * s.n_interpretations());
        }
    }

    #[test]
    fn question_seeds_differ() {
        assert_ne!(question_seed(1, 0), question_seed(1, 1));
        assert_eq!(question_seed(1, 5), question_seed(1, 5));
    }
}
