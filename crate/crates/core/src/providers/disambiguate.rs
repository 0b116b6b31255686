use serde::{Deserialize, Serialize};

use super::{LlmJudge, ProviderError};

const DISAMBIGUATION_TEMPLATE: &str = include_str!("../../prompts/disambiguation.txt");

/// Stop once the reported ambiguity score drops below this.
pub const CONVERGENCE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationRound {
    /// Question text sent in this round.
    pub input: String,
    /// Candidate interpretations, most plausible first.
    pub candidates: Vec<String>,
    pub ambiguity_score: f64,
    pub chosen_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisambiguationTrace {
    pub rounds: Vec<DisambiguationRound>,
    pub converged: bool,
    pub final_interpretations: Vec<String>,
}

impl DisambiguationTrace {
    /// The interpretation carried out of the last round.
    pub fn final_question(&self) -> &str {
        let last = self.rounds.last().expect("trace has at least one round");
        &last.candidates[last.chosen_index]
    }
}

#[derive(Deserialize)]
struct RoundOutput {
    ambiguity_score: f64,
    candidates: Vec<String>,
}

/// Parses `{"ambiguity_score": s, "candidates": [...]}`, tolerating prose or
/// code fences around the object. Rejects `s` outside `[0, 1]` and empty
/// candidate lists.
pub fn parse_disambiguation(text: &str) -> Option<(f64, Vec<String>)> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    if end < start {
        return None;
    }
    let out: RoundOutput = serde_json::from_str(&text[start..=end]).ok()?;
    let candidates: Vec<String> =
        out.candidates.into_iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect();
    if !(0.0..=1.0).contains(&out.ambiguity_score) || candidates.is_empty() {
        return None;
    }
    Some((out.ambiguity_score, candidates))
}

fn schema() -> serde_json::Value {
    serde_json::json!({
        "type": "json_schema",
        "json_schema": {"name": "disambiguation", "schema": {
            "type": "object",
            "properties": {
                "ambiguity_score": {"type": "number", "minimum": 0, "maximum": 1},
                "candidates": {"type": "array", "items": {"type": "string"}, "minItems": 1}
            },
            "required": ["ambiguity_score", "candidates"]
        }}
    })
}

/// Iteratively rewrites `question`, feeding the top candidate of each round
/// into the next, until the ambiguity score is below
/// [`CONVERGENCE_THRESHOLD`] or `max_rounds` rounds have run.
pub fn disambiguate(question: &str, judge: &LlmJudge, max_rounds: usize) -> Result<DisambiguationTrace, ProviderError> {
    if question.trim().is_empty() {
        return Err(ProviderError::EmptyText("question".into()));
    }
    if max_rounds == 0 {
        return Err(ProviderError::Config("max_rounds must be >= 1".into()));
    }
    let mut rounds = Vec::new();
    let mut current = question.to_string();
    for round in 1..=max_rounds {
        let request = judge.request(DISAMBIGUATION_TEMPLATE.replace("{question}", &current), Some(schema()));
        let (score, candidates) = judge
            .query(&request, parse_disambiguation)
            .map_err(|e| ProviderError::Round { round, source: Box::new(e) })?;
        let next = candidates[0].clone();
        rounds.push(DisambiguationRound { input: current, candidates, ambiguity_score: score, chosen_index: 0 });
        if score < CONVERGENCE_THRESHOLD {
            break;
        }
        current = next;
    }
    let last = rounds.last().expect("at least one round");
    Ok(DisambiguationTrace {
        converged: last.ambiguity_score < CONVERGENCE_THRESHOLD,
        final_interpretations: last.candidates.clone(),
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::remote::ScriptedTransport;
    use crate::providers::EndpointConfig;

    fn judge(responses: &[&str]) -> LlmJudge {
        let cfg = EndpointConfig { backoff_base_ms: 0, ..Default::default() };
        LlmJudge::new(cfg, Box::new(ScriptedTransport::new(responses.iter().copied())))
    }

    fn reply(s: f64, cands: &[&str]) -> String {
        serde_json::json!({"ambiguity_score": s, "candidates": cands}).to_string()
    }

    #[test]
    fn converges_in_one_round() {
        let j = judge(&[&reply(0.05, &["unique patients with AD, any age"])]);
        let t = disambiguate("How many patients have AD?", &j, 3).unwrap();
        assert_eq!(t.rounds.len(), 1);
        assert!(t.converged);
        assert_eq!(t.final_question(), "unique patients with AD, any age");
    }

    #[test]
    fn stops_at_max_rounds_without_converging() {
        let j = judge(&[&reply(0.5, &["r1a", "r1b"]), &reply(0.3, &["r2a"]), &reply(0.2, &["r3a", "r3b"])]);
        let t = disambiguate("q", &j, 3).unwrap();
        assert_eq!(t.rounds.len(), 3);
        assert!(!t.converged);
        assert_eq!(t.final_question(), "r3a");
        assert_eq!(t.rounds[1].input, "r1a");
        assert_eq!(t.rounds[2].input, "r2a");
        let scores: Vec<f64> = t.rounds.iter().map(|r| r.ambiguity_score).collect();
        assert_eq!(scores, vec![0.5, 0.3, 0.2]);
    }

    #[test]
    fn unparsable_round_reports_index() {
        let j = judge(&[&reply(0.5, &["a"]), "not json", "still not", "nope"]);
        match disambiguate("q", &j, 3) {
            Err(ProviderError::Round { round, source }) => {
                assert_eq!(round, 2);
                assert!(matches!(*source, ProviderError::Parse { .. }));
            }
            other => panic!("expected round error, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_out_of_range_and_empty() {
        assert!(parse_disambiguation(&reply(1.5, &["a"])).is_none());
        assert!(parse_disambiguation(&reply(0.5, &[])).is_none());
        let fenced = format!("```json\n{}\n```", reply(0.2, &["x"]));
        assert_eq!(parse_disambiguation(&fenced), Some((0.2, vec!["x".to_string()])));
    }

    #[test]
    fn empty_question_rejected() {
        assert!(disambiguate("  ", &judge(&[]), 3).is_err());
    }
}
