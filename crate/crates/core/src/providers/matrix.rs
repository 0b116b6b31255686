use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ItemKind, ItemRef, ProviderError, SimilarityProvider, SimilarityTask};
use crate::formats;
use crate::spectral::SymMatrix;

/// Row-major square block as stored in matrix files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseBlock {
    pub n: usize,
    pub values: Vec<f64>,
}

impl DenseBlock {
    pub fn from_sym(m: &SymMatrix) -> Self {
        DenseBlock { n: m.dim(), values: m.values_row_major() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemIds {
    pub interpretations: Vec<String>,
    pub answers: Vec<String>,
}

/// One line of a matrix file: precomputed `W_II` and `W_RR` for a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub question_id: String,
    pub item_ids: ItemIds,
    pub w_ii: DenseBlock,
    pub w_rr: DenseBlock,
}

struct Entry {
    interpretations: HashMap<String, usize>,
    answers: HashMap<String, usize>,
    w_ii: SymMatrix,
    w_rr: SymMatrix,
}

/// Answers similarity queries from a precomputed matrix file.
pub struct MatrixProvider {
    source: String,
    entries: HashMap<String, Entry>,
}

impl MatrixProvider {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let records: Vec<MatrixRecord> = formats::read_jsonl(path)
            .map_err(|e| ProviderError::MalformedMatrix { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_records(path.display().to_string(), records)
    }

    pub fn from_records(source: impl Into<String>, records: Vec<MatrixRecord>) -> Result<Self, ProviderError> {
        let source = source.into();
        let bad = |message: String| ProviderError::MalformedMatrix { path: source.clone(), message };
        let mut entries = HashMap::with_capacity(records.len());
        for rec in records {
            let qid = rec.question_id.clone();
            let block = |name: &str, b: &DenseBlock, ids: &[String]| -> Result<SymMatrix, ProviderError> {
                if b.n != ids.len() {
                    return Err(bad(format!("{qid}: {name}.n = {} but {} item ids", b.n, ids.len())));
                }
                SymMatrix::new(b.n, b.values.clone()).map_err(|e| bad(format!("{qid}: {name}: {e}")))
            };
            let w_ii = block("w_ii", &rec.w_ii, &rec.item_ids.interpretations)?;
            let w_rr = block("w_rr", &rec.w_rr, &rec.item_ids.answers)?;
            let index = |ids: &[String]| -> Result<HashMap<String, usize>, ProviderError> {
                let mut map = HashMap::with_capacity(ids.len());
                for (i, id) in ids.iter().enumerate() {
                    if map.insert(id.clone(), i).is_some() {
                        return Err(bad(format!("{qid}: duplicate item id {id:?}")));
                    }
                }
                Ok(map)
            };
            let entry = Entry {
                interpretations: index(&rec.item_ids.interpretations)?,
                answers: index(&rec.item_ids.answers)?,
                w_ii,
                w_rr,
            };
            if entries.insert(qid.clone(), entry).is_some() {
                return Err(bad(format!("duplicate question_id {qid:?}")));
            }
        }
        Ok(MatrixProvider { source, entries })
    }
}

impl SimilarityProvider for MatrixProvider {
    fn id(&self) -> String {
        format!("matrix:{}", self.source)
    }

    fn similarity(&self, a: &ItemRef<'_>, b: &ItemRef<'_>, _task: &SimilarityTask) -> Result<f64, ProviderError> {
        let entry = self
            .entries
            .get(a.question_id)
            .ok_or_else(|| ProviderError::UnknownItem(format!("question {:?}", a.question_id)))?;
        if a.kind != b.kind || a.question_id != b.question_id {
            return Err(ProviderError::UnknownItem(format!("cross-block pair {:?} / {:?}", a.id, b.id)));
        }
        let (index, block) = match a.kind {
            ItemKind::Interpretation => (&entry.interpretations, &entry.w_ii),
            ItemKind::Answer => (&entry.answers, &entry.w_rr),
        };
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| ProviderError::UnknownItem(format!("{:?} in question {:?}", id, a.question_id)))
        };
        Ok(block.get(lookup(a.id)?, lookup(b.id)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> MatrixRecord {
        MatrixRecord {
            question_id: "q1".into(),
            item_ids: ItemIds {
                interpretations: vec!["i1".into(), "i2".into(), "i3".into()],
                answers: vec!["r1".into()],
            },
            w_ii: DenseBlock { n: 3, values: vec![1.0, 0.2, 0.3, 0.2, 1.0, 0.4, 0.3, 0.4, 1.0] },
            w_rr: DenseBlock { n: 1, values: vec![1.0] },
        }
    }

    fn interp<'a>(id: &'a str) -> ItemRef<'a> {
        ItemRef { question_id: "q1", kind: ItemKind::Interpretation, id, text: "t" }
    }

    #[test]
    fn stored_entries_are_returned() {
        let p = MatrixProvider::from_records("mem", vec![record()]).unwrap();
        let task = SimilarityTask::default();
        assert_eq!(p.similarity(&interp("i1"), &interp("i2"), &task).unwrap(), 0.2);
        assert_eq!(p.similarity(&interp("i3"), &interp("i2"), &task).unwrap(), 0.4);
    }

    #[test]
    fn asymmetric_matrix_rejected_at_load() {
        let mut rec = record();
        rec.w_ii.values[1] = 0.9;
        assert!(matches!(MatrixProvider::from_records("mem", vec![rec]), Err(ProviderError::MalformedMatrix { .. })));
    }

    #[test]
    fn unknown_ids_reported() {
        let p = MatrixProvider::from_records("mem", vec![record()]).unwrap();
        let task = SimilarityTask::default();
        assert!(matches!(p.similarity(&interp("i1"), &interp("zz"), &task), Err(ProviderError::UnknownItem(_))));
        let other = ItemRef { question_id: "q9", ..interp("i1") };
        assert!(matches!(p.similarity(&other, &other, &task), Err(ProviderError::UnknownItem(_))));
    }

    #[test]
    fn dimension_must_match_ids() {
        let mut rec = record();
        rec.item_ids.answers.push("r2".into());
        assert!(MatrixProvider::from_records("mem", vec![rec]).is_err());
    }
}
