//! Similarity and correctness judges, plus the iterative disambiguation loop.
//!
//! Three similarity backends ship: [`MockProvider`] (token Jaccard, offline),
//! [`MatrixProvider`] (precomputed blocks from a matrix file) and
//! [`LlmJudge`] (remote chat-completion endpoint). All are `Send + Sync`.

mod disambiguate;
mod judge;
mod matrix;
mod mock;
pub mod remote;
mod task;

pub use disambiguate::{disambiguate, parse_disambiguation, DisambiguationRound, DisambiguationTrace, CONVERGENCE_THRESHOLD};
pub use judge::{label_text_equal, CorrectnessJudge, ExactMatchJudge};
pub use matrix::{DenseBlock, ItemIds, MatrixProvider, MatrixRecord};
pub use mock::MockProvider;
pub use remote::{parse_score, parse_verdict, EndpointConfig, LlmJudge};
pub use task::{SimilarityTask, TaskKind, PROMPT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("empty text for {0}")]
    EmptyText(String),
    #[error("unknown item: {0}")]
    UnknownItem(String),
    #[error("invalid prompt template: {0}")]
    Template(String),
    #[error("malformed matrix file {path}: {message}")]
    MalformedMatrix { path: String, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("could not parse judge response after {attempts} attempt(s): {last_response:?}")]
    Parse { attempts: usize, last_response: String },
    #[error("no recorded response for request (replay miss)")]
    ReplayMiss,
    #[error("endpoint configuration: {0}")]
    Config(String),
    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<ProviderError> },
    #[error("judge needs a gold answer or explicit flag: {0}")]
    MissingGold(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Interpretation,
    Answer,
}

/// One side of a similarity query.
#[derive(Debug, Clone, Copy)]
pub struct ItemRef<'a> {
    pub question_id: &'a str,
    pub kind: ItemKind,
    pub id: &'a str,
    pub text: &'a str,
}

/// Pairwise similarity `k(a, b)`. Scores are nominally in `[0, 1]`; the graph
/// assembler clamps and counts anything outside that range.
pub trait SimilarityProvider: Send + Sync {
    /// Stable identifier echoed into run manifests.
    fn id(&self) -> String;

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, task: &SimilarityTask) -> Result<f64, ProviderError>;
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for &P {
    fn id(&self) -> String {
        (**self).id()
    }

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, task: &SimilarityTask) -> Result<f64, ProviderError> {
        (**self).similarity(a, b, task)
    }
}

impl<P: SimilarityProvider + ?Sized> SimilarityProvider for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, task: &SimilarityTask) -> Result<f64, ProviderError> {
        (**self).similarity(a, b, task)
    }
}
