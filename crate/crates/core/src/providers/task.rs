use serde::{Deserialize, Serialize};

use super::ProviderError;

/// Version tag of the bundled prompt templates, echoed into manifests.
pub const PROMPT_VERSION: &str = "v1";

const SQL_EQUIVALENCE: &str = include_str!("../../prompts/sql_equivalence.txt");
const FACTUAL_EQUIVALENCE: &str = include_str!("../../prompts/factual_answer_equivalence.txt");
const GENERIC: &str = include_str!("../../prompts/generic.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SqlEquivalence,
    FactualAnswerEquivalence,
    Generic,
}

/// Notion of equivalence used when scoring a pair, as a prompt with `{a}` and
/// `{b}` slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityTask {
    pub kind: TaskKind,
    pub prompt_template: String,
}

impl SimilarityTask {
    pub fn new(kind: TaskKind, prompt_template: impl Into<String>) -> Result<Self, ProviderError> {
        let prompt_template = prompt_template.into();
        for slot in ["{a}", "{b}"] {
            let count = prompt_template.matches(slot).count();
            if count != 1 {
                return Err(ProviderError::Template(format!("slot {slot} appears {count} times, expected 1")));
            }
        }
        Ok(SimilarityTask { kind, prompt_template })
    }

    /// Bundled template for `kind`.
    pub fn builtin(kind: TaskKind) -> Self {
        let template = match kind {
            TaskKind::SqlEquivalence => SQL_EQUIVALENCE,
            TaskKind::FactualAnswerEquivalence => FACTUAL_EQUIVALENCE,
            TaskKind::Generic => GENERIC,
        };
        SimilarityTask { kind, prompt_template: template.to_string() }
    }

    pub fn render(&self, a: &str, b: &str) -> String {
        // substitute {a} first on a split so text containing "{b}" is not re-expanded
        let (head, tail) = self.prompt_template.split_once("{a}").expect("validated template");
        if let Some((mid, rest)) = tail.split_once("{b}") {
            format!("{head}{a}{mid}{b}{rest}")
        } else {
            let (pre, post) = head.split_once("{b}").expect("validated template");
            format!("{pre}{b}{post}{a}{tail}")
        }
    }
}

impl Default for SimilarityTask {
    fn default() -> Self {
        Self::builtin(TaskKind::Generic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_have_both_slots() {
        for kind in [TaskKind::SqlEquivalence, TaskKind::FactualAnswerEquivalence, TaskKind::Generic] {
            let t = SimilarityTask::builtin(kind);
            assert!(SimilarityTask::new(kind, t.prompt_template.clone()).is_ok());
        }
    }

    #[test]
    fn template_slot_validation() {
        assert!(SimilarityTask::new(TaskKind::Generic, "{a} only").is_err());
        assert!(SimilarityTask::new(TaskKind::Generic, "{a} {b} {a}").is_err());
        assert!(SimilarityTask::new(TaskKind::Generic, "{b} then {a}").is_ok());
    }

    #[test]
    fn render_does_not_reexpand_slots() {
        let t = SimilarityTask::new(TaskKind::Generic, "A={a};B={b}").unwrap();
        assert_eq!(t.render("x{b}", "y"), "A=x{b};B=y");
        let t = SimilarityTask::new(TaskKind::Generic, "B={b};A={a}").unwrap();
        assert_eq!(t.render("x", "y{a}"), "B=y{a};A=x");
    }
}
