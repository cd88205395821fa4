use rayon::prelude::*;

use super::dense::ensure_unique;
use crate::error::{Error, Result};
use crate::scoring::{maxsim, maxsim_normalized};
use crate::vector::{rank_order, sort_ranked, DocId, MultiVectorEmbedding, ScoredDoc};

/// Exact late-interaction index. Every token row is unit-norm.
#[derive(Debug, Clone)]
pub struct MultiVectorIndex {
    ids: Vec<DocId>,
    docs: Vec<MultiVectorEmbedding>,
    dim: usize,
}

pub fn build_multivector_index(records: Vec<(DocId, MultiVectorEmbedding)>) -> Result<MultiVectorIndex> {
    let dim = records
        .first()
        .map(|(_, m)| m.dim())
        .ok_or_else(|| Error::InvalidData("cannot index an empty corpus".into()))?;
    ensure_unique(records.iter().map(|(id, _)| id))?;
    let mut ids = Vec::with_capacity(records.len());
    let mut docs = Vec::with_capacity(records.len());
    for (id, m) in records {
        if m.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: m.dim(),
            });
        }
        docs.push(m.normalize_rows()?);
        ids.push(id);
    }
    Ok(MultiVectorIndex { ids, docs, dim })
}

impl MultiVectorIndex {
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

    pub fn docs(&self) -> &[MultiVectorEmbedding] {
        &self.docs
    }

    pub fn total_tokens(&self) -> usize {
        self.docs.iter().map(MultiVectorEmbedding::n_tokens).sum()
    }

    /// Exact top-`k` by MaxSim, or by query-length-normalized MaxSim when `normalized`.
    pub fn search(&self, q: &MultiVectorEmbedding, k: usize, normalized: bool) -> Result<Vec<ScoredDoc>> {
        if q.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: q.dim(),
            });
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        let score = if normalized { maxsim_normalized } else { maxsim };
        let mut hits = self
            .docs
            .par_iter()
            .zip(&self.ids)
            .map(|(d, id)| Ok(ScoredDoc::new(id.clone(), score(q, d)?)))
            .collect::<Result<Vec<_>>>()?;
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        sort_ranked(&mut hits);
        Ok(hits)
    }
}

pub fn search_multivector(
    index: &MultiVectorIndex,
    q: &MultiVectorEmbedding,
    k: usize,
    normalized: bool,
) -> Result<Vec<ScoredDoc>> {
    index.search(q, k, normalized)
}
