//! Generation records and the bipartite interpretation/answer block system.
//!
//! The full matrix is
//!
//! ```text
//!     [ W_II    W_IR ]
//! W = [              ]      W_IR[n, j] = 1 iff answer j came from interpretation n
//!     [ W_IRᵀ   W_RR ]
//! ```
//!
//! with `W_II`, `W_RR` filled by a [`SimilarityProvider`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::providers::{ItemKind, ItemRef, ProviderError, SimilarityProvider, SimilarityTask};
use crate::spectral::{SpectralError, SymMatrix};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("question {question_id}: {message}")]
    InvalidRecord { question_id: String, message: String },
    #[error("question {question_id}: answer {answer} cites unknown interpretation {interpretation_id:?}")]
    UnresolvedInterpretation { question_id: String, answer: usize, interpretation_id: String },
    #[error("question {question_id}: similarity provider failed: {source}")]
    Provider { question_id: String, source: ProviderError },
    #[error("question {question_id}: provider returned non-finite score for ({a}, {b})")]
    NonFiniteScore { question_id: String, a: String, b: String },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretation {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    /// Optional explicit id; defaults to `<interpretation_id>.<k>` for the
    /// k-th answer (0-based) of that interpretation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub interpretation_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// One question: its interpretations and the answers generated under each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub question_id: String,
    pub question: String,
    pub interpretations: Vec<Interpretation>,
    pub answers: Vec<Answer>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl GenerationRecord {
    fn invalid(&self, message: impl Into<String>) -> GraphError {
        GraphError::InvalidRecord { question_id: self.question_id.clone(), message: message.into() }
    }

    /// Parent interpretation index of every answer, in answer order.
    pub fn parents(&self) -> Result<Vec<usize>, GraphError> {
        let index: HashMap<&str, usize> =
            self.interpretations.iter().enumerate().map(|(i, interp)| (interp.id.as_str(), i)).collect();
        self.answers
            .iter()
            .enumerate()
            .map(|(j, a)| {
                index.get(a.interpretation_id.as_str()).copied().ok_or_else(|| GraphError::UnresolvedInterpretation {
                    question_id: self.question_id.clone(),
                    answer: j,
                    interpretation_id: a.interpretation_id.clone(),
                })
            })
            .collect()
    }

    /// Resolved answer ids (explicit, or `<interpretation_id>.<k>`).
    pub fn answer_ids(&self) -> Vec<String> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        self.answers
            .iter()
            .map(|a| {
                let k = seen.entry(a.interpretation_id.as_str()).or_insert(0);
                let id = a.id.clone().unwrap_or_else(|| format!("{}.{}", a.interpretation_id, k));
                *k += 1;
                id
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.interpretations.is_empty() {
            return Err(self.invalid("record has no interpretations (N = 0)"));
        }
        if self.answers.is_empty() {
            return Err(self.invalid("record has no answers"));
        }
        let mut ids = HashSet::new();
        for interp in &self.interpretations {
            if !ids.insert(interp.id.as_str()) {
                return Err(self.invalid(format!("duplicate interpretation id {:?}", interp.id)));
            }
        }
        let parents = self.parents()?;
        let mut counts = vec![0usize; self.interpretations.len()];
        for p in parents {
            counts[p] += 1;
        }
        if let Some(n) = counts.iter().position(|&c| c == 0) {
            return Err(self.invalid(format!("interpretation {:?} has no answers", self.interpretations[n].id)));
        }
        let mut answer_ids = HashSet::new();
        for id in self.answer_ids() {
            if ids.contains(id.as_str()) || !answer_ids.insert(id.clone()) {
                return Err(self.invalid(format!("duplicate item id {id:?}")));
            }
        }
        Ok(())
    }
}

/// The interpretation/answer block system for one question.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteSystem {
    pub question_id: String,
    pub w_ii: SymMatrix,
    pub w_rr: SymMatrix,
    /// Parent interpretation of each answer column of `W_IR`.
    pub parents: Vec<usize>,
    /// Flattening map: answer column `j` ↦ `(n, m)`, the m-th answer of
    /// interpretation n.
    pub answer_index: Vec<(usize, usize)>,
    pub interpretation_ids: Vec<String>,
    pub answer_ids: Vec<String>,
    /// Provider scores clamped into `[0, 1]` during assembly.
    pub clamped: usize,
}

impl BipartiteSystem {
    /// Validates the block invariants. Item ids default to `i<n>` / `r<j>`.
    pub fn new(
        question_id: impl Into<String>,
        w_ii: SymMatrix,
        w_rr: SymMatrix,
        parents: Vec<usize>,
    ) -> Result<Self, GraphError> {
        let n = w_ii.dim();
        let interpretation_ids = (0..n).map(|i| format!("i{i}")).collect();
        let answer_ids = (0..parents.len()).map(|j| format!("r{j}")).collect();
        Self::with_ids(question_id, w_ii, w_rr, parents, interpretation_ids, answer_ids)
    }

    pub fn with_ids(
        question_id: impl Into<String>,
        w_ii: SymMatrix,
        w_rr: SymMatrix,
        parents: Vec<usize>,
        interpretation_ids: Vec<String>,
        answer_ids: Vec<String>,
    ) -> Result<Self, GraphError> {
        let n = w_ii.dim();
        if w_rr.dim() != parents.len() {
            return Err(GraphError::InvalidSystem(format!(
                "W_RR is {0}x{0} but {1} answers have parents",
                w_rr.dim(),
                parents.len()
            )));
        }
        if interpretation_ids.len() != n || answer_ids.len() != parents.len() {
            return Err(GraphError::InvalidSystem("item id counts do not match block sizes".into()));
        }
        if let Some(&p) = parents.iter().find(|&&p| p >= n) {
            return Err(GraphError::InvalidSystem(format!("parent index {p} out of range for N = {n}")));
        }
        for (name, block) in [("W_II", &w_ii), ("W_RR", &w_rr)] {
            for i in 0..block.dim() {
                if block.get(i, i) != 1.0 {
                    return Err(GraphError::InvalidSystem(format!("{name} diagonal entry {i} is not 1")));
                }
                for j in 0..block.dim() {
                    let v = block.get(i, j);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(GraphError::InvalidSystem(format!("{name}[{i},{j}] = {v} outside [0, 1]")));
                    }
                }
            }
        }
        let mut counters = vec![0usize; n];
        let answer_index = parents
            .iter()
            .map(|&p| {
                let m = counters[p];
                counters[p] += 1;
                (p, m)
            })
            .collect();
        Ok(BipartiteSystem {
            question_id: question_id.into(),
            w_ii,
            w_rr,
            parents,
            answer_index,
            interpretation_ids,
            answer_ids,
            clamped: 0,
        })
    }

    pub fn n_interpretations(&self) -> usize {
        self.w_ii.dim()
    }

    pub fn n_answers(&self) -> usize {
        self.w_rr.dim()
    }

    /// Binary `N × R` provenance block `W_IR`.
    pub fn w_ir(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_interpretations(), self.n_answers());
        for (j, &p) in self.parents.iter().enumerate() {
            m[(p, j)] = 1.0;
        }
        m
    }

    /// The `(N + R) × (N + R)` block matrix `[[W_II, W_IR], [W_IRᵀ, W_RR]]`.
    pub fn full_matrix(&self) -> SymMatrix {
        let (n, r) = (self.n_interpretations(), self.n_answers());
        let mut m = DMatrix::zeros(n + r, n + r);
        m.view_mut((0, 0), (n, n)).copy_from(self.w_ii.as_matrix());
        m.view_mut((n, n), (r, r)).copy_from(self.w_rr.as_matrix());
        for (j, &p) in self.parents.iter().enumerate() {
            m[(p, n + j)] = 1.0;
            m[(n + j, p)] = 1.0;
        }
        SymMatrix::from_matrix(m).expect("block assembly of symmetric blocks is symmetric")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Upper bound on concurrent similarity queries for one record.
    pub max_concurrency: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { max_concurrency: 1 }
    }
}

struct PairJob<'a> {
    block: usize,
    i: usize,
    j: usize,
    a: ItemRef<'a>,
    b: ItemRef<'a>,
}

/// Builds the block system for `record`, querying `provider` once per
/// unordered pair within each block and mirroring the result.
pub fn assemble_system(
    record: &GenerationRecord,
    provider: &dyn SimilarityProvider,
    task: &SimilarityTask,
    options: AssemblyOptions,
) -> Result<BipartiteSystem, GraphError> {
    record.validate()?;
    let parents = record.parents()?;
    let answer_ids = record.answer_ids();
    let qid = record.question_id.as_str();

    let interp_items: Vec<ItemRef<'_>> = record
        .interpretations
        .iter()
        .map(|i| ItemRef { question_id: qid, kind: ItemKind::Interpretation, id: &i.id, text: &i.text })
        .collect();
    let answer_items: Vec<ItemRef<'_>> = record
        .answers
        .iter()
        .zip(&answer_ids)
        .map(|(a, id)| ItemRef { question_id: qid, kind: ItemKind::Answer, id, text: &a.text })
        .collect();

    let mut jobs = Vec::new();
    for (block, items) in [&interp_items, &answer_items].into_iter().enumerate() {
        for i in 0..items.len() {
            for j in (i + 1)..items.len() {
                jobs.push(PairJob { block, i, j, a: items[i], b: items[j] });
            }
        }
    }

    let scores = run_jobs(&jobs, provider, task, options.max_concurrency).map_err(|source| GraphError::Provider {
        question_id: record.question_id.clone(),
        source,
    })?;

    let (n, r) = (interp_items.len(), answer_items.len());
    let mut blocks = [DMatrix::identity(n, n), DMatrix::identity(r, r)];
    let mut clamped = 0;
    for (job, raw) in jobs.iter().zip(scores) {
        if !raw.is_finite() {
            return Err(GraphError::NonFiniteScore {
                question_id: record.question_id.clone(),
                a: job.a.id.to_string(),
                b: job.b.id.to_string(),
            });
        }
        let v = raw.clamp(0.0, 1.0);
        if v != raw {
            clamped += 1;
        }
        blocks[job.block][(job.i, job.j)] = v;
        blocks[job.block][(job.j, job.i)] = v;
    }
    if clamped > 0 {
        log::warn!("question {qid}: clamped {clamped} similarity score(s) into [0, 1]");
    }
    let [w_ii, w_rr] = blocks;
    let mut system = BipartiteSystem::with_ids(
        qid,
        SymMatrix::from_matrix(w_ii)?,
        SymMatrix::from_matrix(w_rr)?,
        parents,
        record.interpretations.iter().map(|i| i.id.clone()).collect(),
        answer_ids,
    )?;
    system.clamped = clamped;
    Ok(system)
}

fn run_jobs(
    jobs: &[PairJob<'_>],
    provider: &dyn SimilarityProvider,
    task: &SimilarityTask,
    max_concurrency: usize,
) -> Result<Vec<f64>, ProviderError> {
    let workers = max_concurrency.max(1).min(jobs.len().max(1));
    if workers == 1 {
        return jobs.iter().map(|job| provider.similarity(&job.a, &job.b, task)).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<f64, ProviderError>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(k) else { break };
                let out = provider.similarity(&job.a, &job.b, task);
                let failed = out.is_err();
                results.lock().unwrap()[k] = Some(out);
                if failed {
                    // stop handing out further work
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });
    // first error in job order wins so failures are reported deterministically
    let results = results.into_inner().unwrap();
    let mut out = Vec::with_capacity(jobs.len());
    for r in results {
        match r {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            None => unreachable!("jobs after a failure are only skipped once an earlier error exists"),
        }
    }
    Ok(out)
}
