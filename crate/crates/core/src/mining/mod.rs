//! Hard-negative candidates: BM25 and embedding rankers, reciprocal rank
//! fusion, top-pool sampling and neighbouring-page negatives.

mod bm25;
pub mod io;

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{DenseIndex, SearchMode};
use crate::vector::{sort_ranked, DenseEmbedding, DocId, QueryId, ScoredDoc};

pub use bm25::{bm25_rank, idf as bm25_idf, tokenize, Bm25Index};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_POOL: usize = 20;
pub const DEFAULT_RRF_K: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub k: usize,
    pub pool_size: usize,
    pub rrf_k: f64,
    pub page_window: Vec<i64>,
    pub seed: u64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            pool_size: DEFAULT_POOL,
            rrf_k: DEFAULT_RRF_K,
            page_window: vec![-3, -2, -1, 1, 2, 3],
            seed: 42,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.pool_size == 0 {
            return Err(Error::InvalidConfig("k and pool size must be >= 1".into()));
        }
        if self.k > self.pool_size {
            return Err(Error::InvalidConfig(format!(
                "k ({}) must not exceed pool size ({})",
                self.k, self.pool_size
            )));
        }
        if !(self.rrf_k > 0.0 && self.rrf_k.is_finite()) {
            return Err(Error::InvalidConfig("rrf-k must be > 0".into()));
        }
        if self.page_window.contains(&0) {
            return Err(Error::InvalidConfig("page window offsets must be nonzero".into()));
        }
        Ok(())
    }

    /// Generator for one query: a pure function of the seed and the query
    /// id, so results do not depend on processing order.
    fn rng_for(&self, query: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(xxhash_rust::xxh3::xxh3_64_with_seed(query.as_bytes(), self.seed))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSidecar {
    #[serde(rename = "_id")]
    pub doc: DocId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PageRef {
    pub doc: DocId,
    pub source_doc: String,
    pub page_no: u32,
}

/// Exact cosine top-n.
pub fn embedding_rank(q: &DenseEmbedding, index: &DenseIndex, top_n: usize) -> Result<Vec<ScoredDoc>> {
    index.search(q, top_n, SearchMode::Exact)
}

/// `score(d) = Σ_r 1 / (rrf_k + rank_r(d))` with 1-based ranks taken from
/// list order. A doc listed twice in one ranking counts at its first rank.
pub fn rrf_fuse(rankings: &[Vec<ScoredDoc>], rrf_k: f64) -> Vec<ScoredDoc> {
    let mut parts: HashMap<&DocId, Vec<f64>> = HashMap::new();
    for ranking in rankings {
        let mut seen = HashSet::new();
        for (i, sd) in ranking.iter().enumerate() {
            if seen.insert(&sd.doc) {
                parts.entry(&sd.doc).or_default().push(1.0 / (rrf_k + (i + 1) as f64));
            }
        }
    }
    let mut out: Vec<ScoredDoc> = parts
        .into_iter()
        .map(|(doc, mut p)| {
            // Summing in a fixed order keeps the result independent of input order.
            p.sort_by(|a, b| b.total_cmp(a));
            ScoredDoc::new(doc.clone(), p.iter().sum())
        })
        .collect();
    sort_ranked(&mut out);
    out
}

/// Samples `k` negatives uniformly without replacement from the first
/// `pool_size` entries of `fused` that are not in `exclude`.
pub fn mine_negatives_excluding(
    query: &QueryId,
    exclude: &HashSet<&DocId>,
    fused: &[ScoredDoc],
    config: &MiningConfig,
) -> Result<Vec<DocId>> {
    config.validate()?;
    let pool: Vec<&DocId> = fused
        .iter()
        .map(|s| &s.doc)
        .filter(|d| !exclude.contains(d))
        .take(config.pool_size)
        .collect();
    if pool.len() < config.k {
        return Err(Error::PoolTooSmall {
            needed: config.k,
            available: pool.len(),
        });
    }
    let mut rng = config.rng_for(query.as_str());
    let mut picks = sample(&mut rng, pool.len(), config.k).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
}

/// Negatives for one (query, positive) pair; output keeps pool order.
pub fn mine_negatives(
    query: &QueryId,
    positive: &DocId,
    fused: &[ScoredDoc],
    config: &MiningConfig,
) -> Result<Vec<DocId>> {
    mine_negatives_excluding(query, &HashSet::from([positive]), fused, config)
}

/// Pages grouped by source document.
#[derive(Debug, Clone)]
pub struct PageTable {
    by_source: HashMap<String, BTreeMap<u32, DocId>>,
}

impl PageTable {
    pub fn new(pages: &[PageRef]) -> Result<Self> {
        let mut by_source: HashMap<String, BTreeMap<u32, DocId>> = HashMap::new();
        for p in pages {
            let slot = by_source.entry(p.source_doc.clone()).or_default();
            if slot.insert(p.page_no, p.doc.clone()).is_some() {
                return Err(Error::DuplicateId(format!("{} page {}", p.source_doc, p.page_no)));
            }
        }
        Ok(Self { by_source })
    }

    pub fn page_count(&self, source_doc: &str) -> usize {
        self.by_source.get(source_doc).map_or(0, BTreeMap::len)
    }

    /// Existing pages at the window offsets, filled nearest distance first.
    /// When a distance tier holds more pages than remaining slots, the tier
    /// is sampled with the seeded generator.
    pub fn neighbours(&self, positive: &PageRef, config: &MiningConfig) -> Result<Vec<DocId>> {
        config.validate()?;
        let pages = self
            .by_source
            .get(&positive.source_doc)
            .ok_or_else(|| Error::InvalidData(format!("unknown source document `{}`", positive.source_doc)))?;
        if pages.len() <= 1 {
            return Err(Error::NoNeighbors(positive.source_doc.clone()));
        }
        let mut tiers: BTreeMap<u64, Vec<DocId>> = BTreeMap::new();
        let mut offsets = config.page_window.clone();
        offsets.sort_unstable();
        offsets.dedup();
        for off in offsets {
            let page = positive.page_no as i64 + off;
            if page < 0 || page > u32::MAX as i64 {
                continue;
            }
            if let Some(d) = pages.get(&(page as u32)) {
                tiers.entry(off.unsigned_abs()).or_default().push(d.clone());
            }
        }
        if tiers.is_empty() {
            return Err(Error::NoNeighbors(positive.source_doc.clone()));
        }
        let mut rng = config.rng_for(positive.doc.as_str());
        let mut out = Vec::with_capacity(config.k);
        for (_, tier) in tiers {
            let room = config.k - out.len();
            if tier.len() <= room {
                out.extend(tier);
            } else {
                let mut picks = sample(&mut rng, tier.len(), room).into_vec();
                picks.sort_unstable();
                out.extend(picks.into_iter().map(|i| tier[i].clone()));
            }
            if out.len() == config.k {
                break;
            }
        }
        Ok(out)
    }
}

/// Neighbouring-page negatives for `positive` among `pages`.
pub fn page_neighbor_negatives(positive: &PageRef, pages: &[PageRef], config: &MiningConfig) -> Result<Vec<DocId>> {
    PageTable::new(pages)?.neighbours(positive, config)
}
