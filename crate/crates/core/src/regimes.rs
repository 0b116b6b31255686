//! Median-threshold regimes over `(h_i, h_cond)` and their statistics.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::decomposition::EntropyReport;

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("need at least 2 reports to fit thresholds (got {0})")]
    TooFewReports(usize),
    #[error("{reports} reports but {labels} labels")]
    LengthMismatch { reports: usize, labels: usize },
    #[error("non-finite {metric} in report {question_id}")]
    NonFinite { metric: &'static str, question_id: String },
    #[error("no reports with h_r above its cut")]
    EmptySubset,
    #[error("subset with h_r above its cut has only one class")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    #[default]
    Pooled,
    PerModel,
}

/// Fitted cuts; the thresholds file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub h_i_cut: f64,
    pub h_cond_cut: f64,
    pub h_r_cut: f64,
    pub fitted_on: usize,
    pub scope: ThresholdScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "I_Confident")]
    Confident,
    #[serde(rename = "II_Ambiguity")]
    Ambiguity,
    #[serde(rename = "III_Instability")]
    Instability,
    #[serde(rename = "IV_Compound")]
    Compound,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Confident, Regime::Ambiguity, Regime::Instability, Regime::Compound];

    pub fn from_levels(high_ambiguity: bool, high_instability: bool) -> Self {
        match (high_ambiguity, high_instability) {
            (false, false) => Regime::Confident,
            (true, false) => Regime::Ambiguity,
            (false, true) => Regime::Instability,
            (true, true) => Regime::Compound,
        }
    }

    pub fn intervention(self) -> Intervention {
        match self {
            Regime::Confident => Intervention::AutoAnswer,
            Regime::Ambiguity => Intervention::Clarify,
            Regime::Instability => Intervention::Review,
            Regime::Compound => Intervention::ClarifyAndReview,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Confident => "I_Confident",
            Regime::Ambiguity => "II_Ambiguity",
            Regime::Instability => "III_Instability",
            Regime::Compound => "IV_Compound",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    AutoAnswer,
    Clarify,
    Review,
    ClarifyAndReview,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub regime: Regime,
    pub intervention: Intervention,
}

impl From<Regime> for RegimeLabel {
    fn from(regime: Regime) -> Self {
        RegimeLabel { regime, intervention: regime.intervention() }
    }
}

/// Sample median; mean of the two central order statistics for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn column(reports: &[EntropyReport], metric: &'static str, f: fn(&EntropyReport) -> f64) -> Result<Vec<f64>, RegimeError> {
    reports
        .iter()
        .map(|r| {
            let v = f(r);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(RegimeError::NonFinite { metric, question_id: r.question_id.clone() })
            }
        })
        .collect()
}

pub fn fit_thresholds(reports: &[EntropyReport]) -> Result<RegimeThresholds, RegimeError> {
    fit_thresholds_scoped(reports, ThresholdScope::Pooled)
}

/// Median cuts over `reports`. The scope is recorded, not interpreted: callers
/// fitting per model pass one model's reports at a time.
pub fn fit_thresholds_scoped(reports: &[EntropyReport], scope: ThresholdScope) -> Result<RegimeThresholds, RegimeError> {
    if reports.len() < 2 {
        return Err(RegimeError::TooFewReports(reports.len()));
    }
    let cut = |metric, f| -> Result<f64, RegimeError> { Ok(median(&column(reports, metric, f)?).expect("non-empty")) };
    Ok(RegimeThresholds {
        h_i_cut: cut("h_i", |r| r.h_i)?,
        h_cond_cut: cut("h_cond", |r| r.h_cond)?,
        h_r_cut: cut("h_r", |r| r.h_r)?,
        fitted_on: reports.len(),
        scope,
    })
}

/// `high` means strictly above the cut; ties are low.
pub fn classify(report: &EntropyReport, th: &RegimeThresholds) -> RegimeLabel {
    Regime::from_levels(report.h_i > th.h_i_cut, report.h_cond > th.h_cond_cut).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CellCounts {
    pub correct: usize,
    pub incorrect: usize,
}

impl CellCounts {
    pub fn total(&self) -> usize {
        self.correct + self.incorrect
    }

    /// `incorrect / total`, or `None` for an empty cell.
    pub fn error_rate(&self) -> Option<f64> {
        (self.total() > 0).then(|| self.incorrect as f64 / self.total() as f64)
    }

    fn add(&mut self, failure: bool) {
        if failure {
            self.incorrect += 1;
        } else {
            self.correct += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub regime: Regime,
    pub intervention: Intervention,
    pub correct: usize,
    pub incorrect: usize,
    /// `null` when the regime is empty.
    pub error_rate: Option<f64>,
    pub share_of_queries: f64,
    pub share_of_errors: Option<f64>,
}

/// 2×2 regime table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTable {
    pub rows: Vec<RegimeRow>,
    pub total: CellCounts,
    pub total_error_rate: Option<f64>,
}

impl RegimeTable {
    pub fn from_counts(counts: [CellCounts; 4]) -> Self {
        let total = counts.iter().fold(CellCounts::default(), |acc, c| CellCounts {
            correct: acc.correct + c.correct,
            incorrect: acc.incorrect + c.incorrect,
        });
        let rows = Regime::ALL
            .iter()
            .zip(counts)
            .map(|(&regime, c)| RegimeRow {
                regime,
                intervention: regime.intervention(),
                correct: c.correct,
                incorrect: c.incorrect,
                error_rate: c.error_rate(),
                share_of_queries: if total.total() > 0 { c.total() as f64 / total.total() as f64 } else { 0.0 },
                share_of_errors: (total.incorrect > 0).then(|| c.incorrect as f64 / total.incorrect as f64),
            })
            .collect();
        RegimeTable { rows, total, total_error_rate: total.error_rate() }
    }

    pub fn row(&self, regime: Regime) -> &RegimeRow {
        &self.rows[regime.index()]
    }
}

pub fn regime_table(reports: &[EntropyReport], failures: &[bool], th: &RegimeThresholds) -> Result<RegimeTable, RegimeError> {
    if reports.len() != failures.len() {
        return Err(RegimeError::LengthMismatch { reports: reports.len(), labels: failures.len() });
    }
    let mut counts = [CellCounts::default(); 4];
    for (r, &f) in reports.iter().zip(failures) {
        counts[classify(r, th).regime.index()].add(f);
    }
    Ok(RegimeTable::from_counts(counts))
}

/// Regime A (low `h_cond`) vs Regime B (high `h_cond`) among high-`h_r`
/// reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbAnalysis {
    pub subset_size: usize,
    /// Median of `h_cond` within the subset.
    pub h_cond_split: f64,
    pub regime_a: CellCounts,
    pub regime_b: CellCounts,
    /// Accuracy(A) − accuracy(B), percentage points.
    pub delta_pp: f64,
    /// Odds of failure in B over odds of failure in A.
    pub odds_ratio: f64,
    pub haldane_corrected: bool,
    pub chi_square: f64,
    pub chi_square_p: f64,
}

/// Failure odds ratio `(b_inc / b_cor) / (a_inc / a_cor)`, with +0.5 added to
/// every cell when any is zero. Returns the ratio and whether it was corrected.
pub fn odds_ratio(a: CellCounts, b: CellCounts) -> (f64, bool) {
    let cells = [a.correct, a.incorrect, b.correct, b.incorrect];
    let corrected = cells.contains(&0);
    let adj = if corrected { 0.5 } else { 0.0 };
    let [ac, ai, bc, bi] = cells.map(|c| c as f64 + adj);
    ((bi / bc) / (ai / ac), corrected)
}

/// Pearson chi-square on a 2×2 table (1 df, no continuity correction).
/// Returns `(statistic, p)`. Degenerate margins give `(0, 1)`.
pub fn chi_square_2x2(a: CellCounts, b: CellCounts) -> (f64, f64) {
    let obs = [[a.correct as f64, a.incorrect as f64], [b.correct as f64, b.incorrect as f64]];
    let rows = [obs[0][0] + obs[0][1], obs[1][0] + obs[1][1]];
    let cols = [obs[0][0] + obs[1][0], obs[0][1] + obs[1][1]];
    let n = rows[0] + rows[1];
    if rows.contains(&0.0) || cols.contains(&0.0) {
        return (0.0, 1.0);
    }
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] * cols[j] / n;
            stat += (obs[i][j] - expected).powi(2) / expected;
        }
    }
    let p = 1.0 - ChiSquared::new(1.0).expect("1 df").cdf(stat);
    (stat, p.clamp(0.0, 1.0))
}

impl AbAnalysis {
    pub fn from_counts(regime_a: CellCounts, regime_b: CellCounts, h_cond_split: f64) -> Self {
        let acc = |c: CellCounts| c.correct as f64 / c.total().max(1) as f64;
        let (odds_ratio, haldane_corrected) = odds_ratio(regime_a, regime_b);
        let (chi_square, chi_square_p) = chi_square_2x2(regime_a, regime_b);
        AbAnalysis {
            subset_size: regime_a.total() + regime_b.total(),
            h_cond_split,
            regime_a,
            regime_b,
            delta_pp: 100.0 * (acc(regime_a) - acc(regime_b)),
            odds_ratio,
            haldane_corrected,
            chi_square,
            chi_square_p,
        }
    }
}

pub fn ab_analysis(reports: &[EntropyReport], failures: &[bool], th: &RegimeThresholds) -> Result<AbAnalysis, RegimeError> {
    if reports.len() != failures.len() {
        return Err(RegimeError::LengthMismatch { reports: reports.len(), labels: failures.len() });
    }
    let subset: Vec<(f64, bool)> =
        reports.iter().zip(failures).filter(|(r, _)| r.h_r > th.h_r_cut).map(|(r, &f)| (r.h_cond, f)).collect();
    if subset.is_empty() {
        return Err(RegimeError::EmptySubset);
    }
    let fails = subset.iter().filter(|(_, f)| *f).count();
    if fails == 0 || fails == subset.len() {
        return Err(RegimeError::SingleClass);
    }
    let split = median(&subset.iter().map(|(h, _)| *h).collect::<Vec<_>>()).expect("non-empty");
    let (mut a, mut b) = (CellCounts::default(), CellCounts::default());
    for (h, f) in subset {
        if h > split {
            b.add(f);
        } else {
            a.add(f);
        }
    }
    Ok(AbAnalysis::from_counts(a, b, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn report(id: &str, h_i: f64, h_r: f64, h_cond: f64) -> EntropyReport {
        EntropyReport {
            question_id: id.into(),
            h_i,
            h_r,
            h_joint: h_i,
            h_naive: 0.0,
            h_cond,
            n_interpretations: 3,
            n_answers: 9,
            tau: 10.0,
            epsilon: 1e-3,
            warnings: vec![],
            regime: None,
        }
    }

    fn th(h_i: f64, h_cond: f64) -> RegimeThresholds {
        RegimeThresholds { h_i_cut: h_i, h_cond_cut: h_cond, h_r_cut: 0.0, fitted_on: 2, scope: ThresholdScope::Pooled }
    }

    #[test]
    fn median_cuts() {
        let reports: Vec<_> = [1.0, 2.0, 3.0, 4.0].iter().map(|&h| report("q", h, h, h)).collect();
        let t = fit_thresholds(&reports).unwrap();
        assert_eq!(t.h_i_cut, 2.5);
        assert_eq!(t.fitted_on, 4);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(fit_thresholds(&reports[..1]), Err(RegimeError::TooFewReports(1)));
    }

    #[test]
    fn classification_matches_regime_list() {
        let t = th(1.0, 1.0);
        let label = classify(&report("q", 2.0, 0.0, 0.5), &t);
        assert_eq!(label, RegimeLabel { regime: Regime::Ambiguity, intervention: Intervention::Clarify });
        let label = classify(&report("q", 0.5, 0.0, 0.5), &t);
        assert_eq!(label, RegimeLabel { regime: Regime::Confident, intervention: Intervention::AutoAnswer });
        let label = classify(&report("q", 1.0, 0.0, 2.0), &t);
        assert_eq!(label, RegimeLabel { regime: Regime::Instability, intervention: Intervention::Review });
        let label = classify(&report("q", 2.0, 0.0, 2.0), &t);
        assert_eq!(label.intervention, Intervention::ClarifyAndReview);
    }

    #[test]
    fn label_serialisation() {
        let s = serde_json::to_string(&RegimeLabel::from(Regime::Instability)).unwrap();
        assert_eq!(s, r#"{"regime":"III_Instability","intervention":"review"}"#);
    }

    #[test]
    fn table_error_rates() {
        let t = RegimeTable::from_counts([
            CellCounts { correct: 534, incorrect: 8 },
            CellCounts { correct: 492, incorrect: 48 },
            CellCounts::default(),
            CellCounts { correct: 1, incorrect: 0 },
        ]);
        assert_eq!(format!("{:.1}", 100.0 * t.rows[0].error_rate.unwrap()), "1.5");
        assert_eq!(format!("{:.1}", 100.0 * t.rows[1].error_rate.unwrap()), "8.9");
        assert_eq!(t.rows[2].error_rate, None);
        assert_eq!(t.total.total(), 534 + 8 + 492 + 48 + 1);
    }

    #[test]
    fn table_counts_partition_input() {
        let reports: Vec<_> = (0..20).map(|k| report("q", (k % 4) as f64, 0.0, (k % 5) as f64)).collect();
        let failures: Vec<bool> = (0..20).map(|k| k % 3 == 0).collect();
        let t = regime_table(&reports, &failures, &fit_thresholds(&reports).unwrap()).unwrap();
        assert_eq!(t.rows.iter().map(|r| r.correct + r.incorrect).sum::<usize>(), 20);
        assert!(regime_table(&reports, &failures[..3], &th(0.0, 0.0)).is_err());
    }

    #[test]
    fn odds_ratio_properties() {
        let a = CellCounts { correct: 90, incorrect: 10 };
        let b = CellCounts { correct: 80, incorrect: 20 };
        let (or_ab, _) = odds_ratio(a, b);
        let (or_ba, _) = odds_ratio(b, a);
        assert!((or_ab * or_ba - 1.0).abs() < 1e-12);
        assert!((or_ab - (20.0 / 80.0) / (10.0 / 90.0)).abs() < 1e-12);
        let (same, corrected) = odds_ratio(a, a);
        assert_eq!((same, corrected), (1.0, false));
        let (_, corrected) = odds_ratio(CellCounts { correct: 5, incorrect: 0 }, b);
        assert!(corrected);
    }

    #[test]
    fn chi_square_balanced_table() {
        let c = CellCounts { correct: 10, incorrect: 10 };
        let (stat, p) = chi_square_2x2(c, c);
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi_square_textbook_value() {
        // [[20, 30], [30, 20]]: expected 25 everywhere, stat = 4 * 25/25 = 4
        let (stat, p) =
            chi_square_2x2(CellCounts { correct: 20, incorrect: 30 }, CellCounts { correct: 30, incorrect: 20 });
        assert!((stat - 4.0).abs() < 1e-12);
        // P(chi2_1 > 4) = erfc(sqrt(2)) = 0.0455002638...
        assert!((p - 0.045_500_263_896_358_4).abs() < 1e-9);
    }

    #[test]
    fn ab_equal_rates() {
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        for k in 0..40 {
            reports.push(report(&format!("q{k}"), 0.0, 1.0, k as f64));
            failures.push(k % 4 == 0);
        }
        let ab = ab_analysis(&reports, &failures, &th(0.0, 0.0)).unwrap();
        assert_eq!(ab.regime_a, ab.regime_b);
        assert_eq!(ab.odds_ratio, 1.0);
        assert_eq!(ab.delta_pp, 0.0);
    }

    #[test]
    fn ab_errors() {
        let reports = vec![report("a", 0.0, 0.0, 0.0), report("b", 0.0, 0.0, 1.0)];
        assert_eq!(ab_analysis(&reports, &[true, false], &th(0.0, 0.0)), Err(RegimeError::EmptySubset));
        let reports = vec![report("a", 0.0, 1.0, 0.0), report("b", 0.0, 1.0, 1.0)];
        assert_eq!(ab_analysis(&reports, &[true, true], &th(0.0, 0.0)), Err(RegimeError::SingleClass));
    }

    #[test]
    fn classify_monotone_in_h_cond() {
        let t = th(1.0, 1.0);
        for h_i in [0.0, 1.0, 2.0] {
            let mut prev_high = false;
            for k in 0..30 {
                let high = matches!(
                    classify(&report("q", h_i, 0.0, k as f64 * 0.1), &t).regime,
                    Regime::Instability | Regime::Compound
                );
                assert!(high || !prev_high);
                prev_high = high;
            }
        }
    }
}
