//! Decomposes the diversity of a two-stage generation process (question →
//! interpretations → answers) into an ambiguity score `h_i` and a conditional
//! instability score `h_cond`, using heat-kernel von Neumann entropies and a
//! Schur-complement conditioning step.
//!
//! Typical flow: build a [`BipartiteSystem`] from a [`GenerationRecord`] with
//! a [`SimilarityProvider`], [`decompose`] it, fit regime thresholds over a
//! batch of reports, and evaluate failure prediction with [`eval`].

pub mod decomposition;
pub mod eval;
pub mod formats;
pub mod graph;
pub mod providers;
pub mod regimes;
pub mod spectral;
pub mod synth;

pub use decomposition::{calibrate_tau, decompose, tau_sweep, Calibration, DecompositionError, EntropyReport};
pub use eval::{auroc, bootstrap_ci, evaluate, label_failure, EvalError, EvaluationConfig, EvaluationSummary};
pub use formats::{FormatError, LabelRecord, RunManifest};
pub use graph::{assemble_system, Answer, AssemblyOptions, BipartiteSystem, GenerationRecord, GraphError, Interpretation};
pub use providers::{
    CorrectnessJudge, ExactMatchJudge, LlmJudge, MatrixProvider, MockProvider, ProviderError, SimilarityProvider,
    SimilarityTask, TaskKind,
};
pub use regimes::{classify, fit_thresholds, Intervention, Regime, RegimeLabel, RegimeThresholds};
pub use spectral::{kle_entropy, ResidualGraph, SpectralConfig, SpectralError, SymMatrix};
pub use synth::{plant_scenario, ScenarioKind, ScenarioSpec};
