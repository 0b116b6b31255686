//! Per-question entropy decomposition and τ calibration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, EvalError};
use crate::graph::BipartiteSystem;
use crate::regimes::RegimeLabel;
use crate::spectral::{self, SpectralConfig, SpectralError, SymMatrix};

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error("question {question_id}: {source}")]
    Numerical { question_id: String, source: SpectralError },
    #[error("calibration grid is empty")]
    EmptyGrid,
    #[error("calibration grid must be strictly ascending and positive")]
    UnsortedGrid,
    #[error("calibration baseline needs n >= 2 (got {0})")]
    BaselineTooSmall(usize),
    #[error("no tau in grid reaches entropy < {threshold} bits (best {best_entropy} at tau = {best_tau})")]
    NoQualifyingTau { threshold: f64, best_tau: f64, best_entropy: f64 },
    #[error("{systems} systems but {labels} labels")]
    LengthMismatch { systems: usize, labels: usize },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Entropy scores (bits) for one question. Doubles as the report file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub question_id: String,
    /// Ambiguity: entropy of the interpretation block.
    pub h_i: f64,
    /// Answer-only baseline.
    pub h_r: f64,
    pub h_joint: f64,
    /// `h_joint - h_i`; may be negative.
    pub h_naive: f64,
    /// Instability: entropy of the Schur residual.
    pub h_cond: f64,
    pub n_interpretations: usize,
    pub n_answers: usize,
    pub tau: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeLabel>,
}

pub fn decompose(system: &BipartiteSystem, cfg: &SpectralConfig) -> Result<EntropyReport, DecompositionError> {
    let tag = |source: SpectralError| DecompositionError::Numerical { question_id: system.question_id.clone(), source };
    cfg.validate().map_err(tag)?;

    let h_i = spectral::kle_entropy(&system.w_ii, cfg).map_err(tag)?;
    let h_r = spectral::kle_entropy(&system.w_rr, cfg).map_err(tag)?;
    let h_joint = spectral::kle_entropy(&system.full_matrix(), cfg).map_err(tag)?;
    let schur = spectral::schur_complement(&system.w_rr, &system.w_ir(), &system.w_ii, cfg.epsilon).map_err(tag)?;
    let h_cond = spectral::residual_entropy(&schur.matrix, cfg).map_err(tag)?;

    let mut warnings = Vec::new();
    if schur.escalated {
        warnings.push(format!("epsilon escalated from {:e} to {:e}", cfg.epsilon, schur.epsilon));
    }
    if system.clamped > 0 {
        warnings.push(format!("{} similarity score(s) clamped to [0, 1]", system.clamped));
    }
    Ok(EntropyReport {
        question_id: system.question_id.clone(),
        h_i,
        h_r,
        h_joint,
        h_naive: h_joint - h_i,
        h_cond,
        n_interpretations: system.n_interpretations(),
        n_answers: system.n_answers(),
        tau: cfg.tau,
        epsilon: schur.epsilon,
        warnings,
        regime: None,
    })
}

/// Default calibration baseline: the 3 × 3 answers of the standard protocol.
pub const DEFAULT_BASELINE_N: usize = 9;
pub const DEFAULT_THRESHOLD_BITS: f64 = 1e-3;
pub const DEFAULT_TAU_GRID: [f64; 7] = [1.0, 2.0, 3.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub tau: f64,
    /// Entropy of the all-ones baseline at the selected τ.
    pub entropy: f64,
}

/// Smallest τ in `grid` at which an all-ones `baseline_n × baseline_n`
/// similarity matrix has entropy below `threshold_bits`.
pub fn calibrate_tau(baseline_n: usize, grid: &[f64], threshold_bits: f64) -> Result<Calibration, DecompositionError> {
    if grid.is_empty() {
        return Err(DecompositionError::EmptyGrid);
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) || grid.iter().any(|t| !t.is_finite()) {
        return Err(DecompositionError::UnsortedGrid);
    }
    if baseline_n < 2 {
        return Err(DecompositionError::BaselineTooSmall(baseline_n));
    }
    let baseline = SymMatrix::ones(baseline_n);
    let mut best = (f64::NAN, f64::INFINITY);
    for &tau in grid {
        let entropy = spectral::kle_entropy(&baseline, &SpectralConfig::with_tau(tau))?;
        if entropy < threshold_bits {
            return Ok(Calibration { tau, entropy });
        }
        if entropy < best.1 {
            best = (tau, entropy);
        }
    }
    Err(DecompositionError::NoQualifyingTau { threshold: threshold_bits, best_tau: best.0, best_entropy: best.1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSweepRow {
    pub tau: f64,
    pub h_i: f64,
    pub h_r: f64,
    pub h_cond: f64,
}

/// Pooled failure-prediction AUROC of `h_i`, `h_r`, `h_cond` at each τ.
pub fn tau_sweep(
    systems: &[BipartiteSystem],
    failures: &[bool],
    grid: &[f64],
    base: &SpectralConfig,
) -> Result<Vec<TauSweepRow>, DecompositionError> {
    if systems.len() != failures.len() {
        return Err(DecompositionError::LengthMismatch { systems: systems.len(), labels: failures.len() });
    }
    if grid.is_empty() {
        return Err(DecompositionError::EmptyGrid);
    }
    eval::check_both_classes(failures)?;
    grid.iter()
        .map(|&tau| {
            let cfg = SpectralConfig { tau, ..*base };
            let reports = systems.iter().map(|s| decompose(s, &cfg)).collect::<Result<Vec<_>, _>>()?;
            let col = |f: fn(&EntropyReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
            Ok(TauSweepRow {
                tau,
                h_i: eval::auroc(&col(|r| r.h_i), failures)?,
                h_r: eval::auroc(&col(|r| r.h_r), failures)?,
                h_cond: eval::auroc(&col(|r| r.h_cond), failures)?,
            })
        })
        .collect()
}
