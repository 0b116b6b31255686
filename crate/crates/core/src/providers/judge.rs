use super::ProviderError;

/// Decides whether a candidate answer matches the gold answer of the
/// interpretation that produced it.
pub trait CorrectnessJudge: Send + Sync {
    fn is_correct(&self, question: &str, interpretation: &str, gold: &str, answer: &str) -> Result<bool, ProviderError>;
}

/// Offline default: equality after collapsing whitespace and case.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatchJudge;

pub fn label_text_equal(a: &str, b: &str) -> bool {
    let norm = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ");
    norm(a) == norm(b)
}

impl CorrectnessJudge for ExactMatchJudge {
    fn is_correct(&self, _question: &str, _interpretation: &str, gold: &str, answer: &str) -> Result<bool, ProviderError> {
        Ok(label_text_equal(gold, answer))
    }
}
