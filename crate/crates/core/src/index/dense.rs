use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::hnsw::{HnswGraph, HnswParams};
use crate::error::{Error, Result};
use crate::vector::{dot, sort_ranked, DenseEmbedding, DocId, ScoredDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Exact,
    Ann,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "ann" => Ok(Self::Ann),
            other => Err(Error::InvalidConfig(format!("unknown search mode `{other}`"))),
        }
    }
}

/// Exact dense index with an optional HNSW graph. Rows are unit-norm.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    ids: Vec<DocId>,
    matrix: Vec<f32>,
    dim: usize,
    ann: Option<HnswGraph>,
}

pub(crate) fn ensure_unique<'a>(ids: impl IntoIterator<Item = &'a DocId>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

/// Builds an index from `(id, embedding)` records. Embeddings are normalized
/// on the way in; an HNSW graph is added when `ann` is given.
pub fn build_dense_index(records: Vec<(DocId, DenseEmbedding)>, ann: Option<HnswParams>) -> Result<DenseIndex> {
    let dim = records
        .first()
        .map(|(_, e)| e.dim())
        .ok_or_else(|| Error::InvalidData("cannot index an empty corpus".into()))?;
    ensure_unique(records.iter().map(|(id, _)| id))?;
    let mut ids = Vec::with_capacity(records.len());
    let mut matrix = Vec::with_capacity(records.len() * dim);
    for (id, emb) in records {
        if emb.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: emb.dim(),
            });
        }
        matrix.extend(emb.normalize()?.into_values());
        ids.push(id);
    }
    let ann = ann.map(|p| HnswGraph::build(&matrix, dim, p)).transpose()?;
    Ok(DenseIndex { ids, matrix, dim, ann })
}

impl DenseIndex {
    pub(crate) fn from_parts(ids: Vec<DocId>, matrix: Vec<f32>, dim: usize, ann: Option<HnswGraph>) -> Result<Self> {
        if dim == 0 || matrix.len() != ids.len() * dim {
            return Err(Error::InvalidData(format!(
                "vector data holds {} floats, expected {} x {}",
                matrix.len(),
                ids.len(),
                dim
            )));
        }
        ensure_unique(&ids)?;
        if let Some(g) = &ann {
            if g.len() != ids.len() {
                return Err(Error::InvalidData("HNSW node count differs from id count".into()));
            }
        }
        Ok(Self { ids, matrix, dim, ann })
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

    pub fn ids(&self) -> &[DocId] {
        &self.ids
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn ann(&self) -> Option<&HnswGraph> {
        self.ann.as_ref()
    }

    pub fn set_ef_search(&mut self, ef: usize) {
        if let Some(g) = &mut self.ann {
            g.set_ef_search(ef);
        }
    }

    fn scored(&self, q: &[f32], i: usize) -> ScoredDoc {
        ScoredDoc::new(self.ids[i].clone(), dot(q, self.row(i)).clamp(-1.0, 1.0))
    }

    /// Top-`k` documents by cosine similarity to `q`.
    pub fn search(&self, q: &DenseEmbedding, k: usize, mode: SearchMode) -> Result<Vec<ScoredDoc>> {
        if q.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        let q = q.normalize()?;
        let q = q.values();
        let mut hits: Vec<ScoredDoc> = match mode {
            SearchMode::Exact => (0..self.len()).map(|i| self.scored(q, i)).collect(),
            SearchMode::Ann => {
                let graph = self.ann.as_ref().ok_or(Error::AnnUnavailable)?;
                graph
                    .search(&self.matrix, self.dim, q, k, graph.params().ef_search)
                    .into_iter()
                    .map(|i| self.scored(q, i as usize))
                    .collect()
            }
        };
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, crate::vector::rank_order);
            hits.truncate(k);
        }
        sort_ranked(&mut hits);
        Ok(hits)
    }
}

/// Free-function form of [`DenseIndex::search`].
pub fn search_dense(index: &DenseIndex, q: &DenseEmbedding, k: usize, mode: SearchMode) -> Result<Vec<ScoredDoc>> {
    index.search(q, k, mode)
}
