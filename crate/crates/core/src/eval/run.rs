use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;

use super::BenchmarkDataset;
use crate::error::{Error, Result};
use crate::index::{build_dense_index, build_multivector_index, HnswParams, IndexKind, SearchMode, StoredIndex};
use crate::providers::{EmbedInput, EmbeddingProvider};
use crate::vector::{QueryId, ScoredDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    DenseExact,
    DenseAnn,
    MultiVector,
    MultiVectorNormalized,
}

impl FromStr for IndexMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dense-exact" | "exact" => Self::DenseExact,
            "dense-ann" | "ann" => Self::DenseAnn,
            "multivector" => Self::MultiVector,
            "multivector-norm" => Self::MultiVectorNormalized,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown mode `{other}` (dense-exact, dense-ann, multivector, multivector-norm)"
                )))
            }
        })
    }
}

/// Per-query ranked lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RetrievalRun {
    pub lists: BTreeMap<QueryId, Vec<ScoredDoc>>,
}

impl RetrievalRun {
    pub fn depth(&self) -> usize {
        self.lists.values().map(Vec::len).max().unwrap_or(0)
    }
}

/// Embeds every corpus document and builds the requested index. Documents
/// are keyed by `image_path` when present, otherwise by their id.
pub fn build_corpus_index(
    dataset: &BenchmarkDataset,
    provider: &dyn EmbeddingProvider,
    kind: IndexKind,
    ann: Option<HnswParams>,
    max_tokens: usize,
) -> Result<StoredIndex> {
    let texts: Vec<String> = dataset.corpus.values().map(|d| d.embed_text()).collect();
    let inputs: Vec<EmbedInput<'_>> = dataset
        .corpus
        .iter()
        .zip(&texts)
        .map(|((id, d), text)| EmbedInput {
            key: d.image_path.as_deref().unwrap_or(id.as_str()),
            text,
        })
        .collect();
    let ids = dataset.corpus.keys().cloned();
    Ok(match kind {
        IndexKind::Dense => {
            let embs = provider.embed_dense_batch(&inputs)?;
            StoredIndex::Dense(build_dense_index(ids.zip(embs).collect(), ann)?)
        }
        IndexKind::Multivector => {
            let embs = provider.embed_multivector_batch(&inputs, max_tokens)?;
            StoredIndex::MultiVector(build_multivector_index(ids.zip(embs).collect())?)
        }
    })
}

/// Runs every dataset query against `index`, keeping `depth` results.
pub fn run_retrieval(
    dataset: &BenchmarkDataset,
    provider: &dyn EmbeddingProvider,
    index: &StoredIndex,
    mode: IndexMode,
    depth: usize,
    max_tokens: usize,
) -> Result<RetrievalRun> {
    if depth == 0 {
        return Err(Error::InvalidConfig("depth must be >= 1".into()));
    }
    let qids: Vec<&QueryId> = dataset.queries.keys().collect();
    let inputs: Vec<EmbedInput<'_>> = dataset
        .queries
        .iter()
        .map(|(id, text)| EmbedInput { key: id.as_str(), text })
        .collect();
    let lists: Vec<Vec<ScoredDoc>> = match (mode, index) {
        (IndexMode::DenseExact | IndexMode::DenseAnn, StoredIndex::Dense(ix)) => {
            let sm = if mode == IndexMode::DenseAnn {
                SearchMode::Ann
            } else {
                SearchMode::Exact
            };
            let embs = provider.embed_dense_batch(&inputs)?;
            embs.par_iter()
                .map(|q| ix.search(q, depth, sm))
                .collect::<Result<_>>()?
        }
        (IndexMode::MultiVector | IndexMode::MultiVectorNormalized, StoredIndex::MultiVector(ix)) => {
            let norm = mode == IndexMode::MultiVectorNormalized;
            let embs = provider.embed_multivector_batch(&inputs, max_tokens)?;
            embs.iter().map(|q| ix.search(q, depth, norm)).collect::<Result<_>>()?
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "mode {mode:?} does not match the index kind"
            )))
        }
    };
    Ok(RetrievalRun {
        lists: qids.into_iter().cloned().zip(lists).collect(),
    })
}
