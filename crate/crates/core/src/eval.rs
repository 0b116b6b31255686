//! Failure labelling, AUROC with stratified bootstrap intervals, and the
//! negative-`h_naive` diagnostic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::EntropyReport;
use crate::graph::{GenerationRecord, GraphError};
use crate::providers::{CorrectnessJudge, ProviderError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("labels contain a single class; AUROC is undefined")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("invalid evaluation config: {0}")]
    Config(String),
    #[error("question {0} has no answers")]
    NoAnswers(String),
    #[error("question {question_id}: answer {answer} has no correctness flag and interpretation {interpretation_id:?} has no gold answer")]
    MissingGold { question_id: String, answer: usize, interpretation_id: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("correctness judge failed: {0}")]
    Judge(#[from] ProviderError),
}

impl PartialEq for EvalError {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    /// A question fails when its path-correct fraction is below this.
    pub eta: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub ci_level: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig { eta: 0.8, bootstrap_b: 1000, seed: 0, ci_level: 0.95 }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        check_eta(self.eta)?;
        if self.bootstrap_b < 100 {
            return Err(EvalError::Config(format!("bootstrap_b must be >= 100 (got {})", self.bootstrap_b)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(EvalError::Config(format!("ci_level must be in (0, 1) (got {})", self.ci_level)));
        }
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<(), EvalError> {
    if eta > 0.0 && eta <= 1.0 {
        Ok(())
    } else {
        Err(EvalError::Config(format!("eta must be in (0, 1] (got {eta})")))
    }
}

/// Fraction of answers that match the gold answer of their own
/// interpretation. A `correct` flag on the answer takes precedence over the
/// judge.
pub fn path_correct_fraction(record: &GenerationRecord, judge: &dyn CorrectnessJudge) -> Result<f64, EvalError> {
    if record.answers.is_empty() {
        return Err(EvalError::NoAnswers(record.question_id.clone()));
    }
    let parents = record.parents()?;
    let mut correct = 0usize;
    for (j, (answer, &p)) in record.answers.iter().zip(&parents).enumerate() {
        let ok = match answer.correct {
            Some(flag) => flag,
            None => {
                let interp = &record.interpretations[p];
                let gold = interp.gold_answer.as_deref().ok_or_else(|| EvalError::MissingGold {
                    question_id: record.question_id.clone(),
                    answer: j,
                    interpretation_id: interp.id.clone(),
                })?;
                judge.is_correct(&record.question, &interp.text, gold, &answer.text)?
            }
        };
        correct += ok as usize;
    }
    Ok(correct as f64 / record.answers.len() as f64)
}

pub fn label_failure(record: &GenerationRecord, eta: f64, judge: &dyn CorrectnessJudge) -> Result<bool, EvalError> {
    check_eta(eta)?;
    Ok(path_correct_fraction(record, judge)? < eta)
}

pub fn check_both_classes(labels: &[bool]) -> Result<(), EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(EvalError::SingleClass);
    }
    Ok(())
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(i));
    }
    check_both_classes(labels)
}

/// Mann-Whitney statistic over `(score, is_failure)` pairs, assumed valid.
fn auroc_unchecked(pairs: &mut [(f64, bool)]) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = pairs.iter().filter(|p| p.1).count() as f64;
    let n_neg = pairs.len() as f64 - n_pos;
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j + 1 < pairs.len() && pairs[j + 1].0 == pairs[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_run = pairs[i..=j].iter().filter(|p| p.1).count() as f64;
        rank_sum += mid_rank * pos_in_run;
        i = j + 1;
    }
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Probability that a random failure outscores a random success, ties
/// counting one half. Higher scores must mean "more likely to fail".
pub fn auroc(scores: &[f64], failures: &[bool]) -> Result<f64, EvalError> {
    check_inputs(scores, failures)?;
    let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(failures.iter().copied()).collect();
    Ok(auroc_unchecked(&mut pairs))
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stratified percentile bootstrap interval for [`auroc`]. Each resample
/// draws failures and successes separately with replacement, using an RNG
/// stream keyed by `(seed, resample index)`, so results do not depend on
/// thread scheduling.
pub fn bootstrap_ci(scores: &[f64], failures: &[bool], cfg: &EvaluationConfig) -> Result<(f64, f64), EvalError> {
    cfg.validate()?;
    check_inputs(scores, failures)?;
    let pos: Vec<f64> = scores.iter().zip(failures).filter(|(_, &f)| f).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(failures).filter(|(_, &f)| !f).map(|(&s, _)| s).collect();

    let mut stats: Vec<f64> = (0..cfg.bootstrap_b)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let mut pairs = Vec::with_capacity(pos.len() + neg.len());
            pairs.extend((0..pos.len()).map(|_| (pos[rng.gen_range(0..pos.len())], true)));
            pairs.extend((0..neg.len()).map(|_| (neg[rng.gen_range(0..neg.len())], false)));
            auroc_unchecked(&mut pairs)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - cfg.ci_level;
    Ok((quantile_sorted(&stats, alpha / 2.0), quantile_sorted(&stats, 1.0 - alpha / 2.0)))
}

/// Share of reports with `h_naive < 0`.
pub fn negative_fraction(reports: &[EntropyReport]) -> Result<f64, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(reports.iter().filter(|r| r.h_naive < 0.0).count() as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub auroc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// False when the bootstrap interval does not contain the point estimate.
    pub ci_contains_auroc: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub metrics: Vec<MetricSummary>,
    pub negative_fraction: f64,
    pub n: usize,
    pub n_failures: usize,
    pub config: EvaluationConfig,
}

impl EvaluationSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.metric == name)
    }
}

pub const METRICS: [&str; 4] = ["h_i", "h_r", "h_naive", "h_cond"];

fn metric_value(r: &EntropyReport, name: &str) -> f64 {
    match name {
        "h_i" => r.h_i,
        "h_r" => r.h_r,
        "h_naive" => r.h_naive,
        "h_cond" => r.h_cond,
        _ => unreachable!("unknown metric {name}"),
    }
}

/// AUROC and bootstrap interval of every entropy metric against `failures`.
pub fn evaluate(reports: &[EntropyReport], failures: &[bool], cfg: &EvaluationConfig) -> Result<EvaluationSummary, EvalError> {
    cfg.validate()?;
    if reports.len() != failures.len() {
        return Err(EvalError::LengthMismatch { scores: reports.len(), labels: failures.len() });
    }
    check_both_classes(failures)?;
    let metrics = METRICS
        .iter()
        .map(|&name| {
            let scores: Vec<f64> = reports.iter().map(|r| metric_value(r, name)).collect();
            let point = auroc(&scores, failures)?;
            let (lo, hi) = bootstrap_ci(&scores, failures, cfg)?;
            if !(lo <= point && point <= hi) {
                log::warn!("{name}: bootstrap interval [{lo}, {hi}] excludes AUROC {point}");
            }
            Ok(MetricSummary {
                metric: name.to_string(),
                auroc: point,
                ci_lo: lo,
                ci_hi: hi,
                ci_contains_auroc: lo <= point && point <= hi,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(EvaluationSummary {
        metrics,
        negative_fraction: negative_fraction(reports)?,
        n: reports.len(),
        n_failures: failures.iter().filter(|&&f| f).count(),
        config: *cfg,
    })
}
