//! Row-aligned embedding matrices with exact cosine retrieval.
//!
//! Rows are L2-normalized once when the matrix is built and stored as
//! `f64`; every similarity afterwards is a plain dot product. Retrieval is a
//! full scan, ties are broken by ascending row index.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::ids::SynsetId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("{ids} ids for {values} values of dimension {dim}")]
    ShapeMismatch { ids: usize, values: usize, dim: usize },
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("row {0} contains a NaN or infinite value")]
    NonFinite(usize),
    #[error("row {0} has zero norm")]
    ZeroNorm(usize),
    #[error("query has dimension {query}, index has {index}")]
    DimensionMismatch { query: usize, index: usize },
    #[error("query vector is zero or not finite")]
    InvalidQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k = {k} is invalid for an index of {n} rows")]
    InvalidK { k: usize, n: usize },
    #[error("no text embedding for {0}")]
    MissingTextEmbedding(SynsetId),
    #[error("no proposals to score")]
    NoProposals,
    #[error("{rows} rows but {labels} labels")]
    LabelCount { rows: usize, labels: usize },
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub row: usize,
    pub id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
    dim: usize,
    rows: Vec<f64>,
}

fn normalize(values: &[f32]) -> Option<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let norm = libm::sqrt(values.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>());
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(values.iter().map(|&v| f64::from(v) / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Descending similarity, then ascending row.
fn rank_order(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

impl EmbeddingMatrix {
    /// `values` is row-major with `ids.len() * dim` entries.
    pub fn new(ids: Vec<String>, dim: usize, values: &[f32]) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        if ids.len() * dim != values.len() {
            return Err(EmbeddingError::ShapeMismatch { ids: ids.len(), values: values.len(), dim });
        }
        let mut index = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateId(id.clone()));
            }
        }
        let mut rows = Vec::with_capacity(values.len());
        for (i, chunk) in values.chunks_exact(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite(i));
            }
            rows.extend(normalize(chunk).ok_or(EmbeddingError::ZeroNorm(i))?);
        }
        Ok(EmbeddingMatrix { ids, index, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Normalized row for `id`.
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Exact top-`k` rows by cosine similarity to `query`.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, EmbeddingError> {
        self.check_query(query.len(), k)?;
        let q = normalize(query).ok_or(EmbeddingError::InvalidQuery)?;
        Ok(self.top_k(&q, k))
    }

    /// Like [`knn`](Self::knn) for an already normalized query.
    pub fn knn_normalized(&self, query: &[f64], k: usize) -> Result<Vec<Neighbor>, EmbeddingError> {
        self.check_query(query.len(), k)?;
        Ok(self.top_k(query, k))
    }

    fn check_query(&self, len: usize, k: usize) -> Result<(), EmbeddingError> {
        if self.is_empty() {
            return Err(EmbeddingError::EmptyIndex);
        }
        if len != self.dim {
            return Err(EmbeddingError::DimensionMismatch { query: len, index: self.dim });
        }
        if k == 0 || k > self.len() {
            return Err(EmbeddingError::InvalidK { k, n: self.len() });
        }
        Ok(())
    }

    fn top_k(&self, q: &[f64], k: usize) -> Vec<Neighbor> {
        let mut scored: Vec<(f64, usize)> =
            (0..self.len()).map(|i| (dot(q, self.row(i)), i)).collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(rank_order);
        scored
            .into_iter()
            .map(|(similarity, row)| Neighbor { row, id: self.ids[row].clone(), similarity })
            .collect()
    }
}

/// A reference index whose rows carry a class label each.
#[derive(Debug, Clone)]
pub struct LabeledIndex {
    pub matrix: EmbeddingMatrix,
    labels: Vec<SynsetId>,
}

impl LabeledIndex {
    pub fn new(matrix: EmbeddingMatrix, labels: Vec<SynsetId>) -> Result<Self, EmbeddingError> {
        if matrix.len() != labels.len() {
            return Err(EmbeddingError::LabelCount { rows: matrix.len(), labels: labels.len() });
        }
        Ok(LabeledIndex { matrix, labels })
    }

    pub fn label(&self, row: usize) -> &SynsetId {
        &self.labels[row]
    }

    pub fn labels(&self) -> &[SynsetId] {
        &self.labels
    }
}

/// Open-world scores of a set of proposal labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalScores {
    pub best: SynsetId,
    pub scores: BTreeMap<SynsetId, f64>,
}

/// Scores each proposal by the cosine between the image embedding and the
/// proposal's text embedding. Ties go to the smallest synset id.
pub fn score_proposals(
    image: &[f64],
    proposals: &BTreeSet<SynsetId>,
    text: &EmbeddingMatrix,
) -> Result<ProposalScores, EmbeddingError> {
    if image.len() != text.dim() {
        return Err(EmbeddingError::DimensionMismatch { query: image.len(), index: text.dim() });
    }
    let norm = libm::sqrt(dot(image, image));
    if norm == 0.0 || !norm.is_finite() {
        return Err(EmbeddingError::InvalidQuery);
    }
    let mut scores = BTreeMap::new();
    let mut best: Option<(&SynsetId, f64)> = None;
    // BTreeSet iteration is ascending, so a strict `>` keeps the smallest id on ties.
    for p in proposals {
        let row = text.get(p.as_str()).ok_or_else(|| EmbeddingError::MissingTextEmbedding(p.clone()))?;
        let s = dot(image, row) / norm;
        scores.insert(p.clone(), s);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((p, s));
        }
    }
    let (best, _) = best.ok_or(EmbeddingError::NoProposals)?;
    Ok(ProposalScores { best: best.clone(), scores })
}

/// [`score_proposals`] for a raw `f32` image embedding.
pub fn score_proposals_f32(
    image: &[f32],
    proposals: &BTreeSet<SynsetId>,
    text: &EmbeddingMatrix,
) -> Result<ProposalScores, EmbeddingError> {
    let v = normalize(image).ok_or(EmbeddingError::InvalidQuery)?;
    score_proposals(&v, proposals, text)
}
