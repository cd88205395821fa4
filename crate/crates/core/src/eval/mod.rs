//! BEIR-layout datasets, retrieval runs and ranking metrics.

pub mod metrics;
mod report;
mod run;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::vector::{DocId, QueryId};

pub use metrics::{
    evaluate_metric, map_at_k, mrr_at_k, ndcg_at_k, parse_metrics, recall_at_k, Metric, MetricValues, DEFAULT_METRICS,
};
pub use report::{compare_runs, evaluate, Comparison, ComparisonRow, MetricReport};
pub use run::{build_corpus_index, run_retrieval, IndexMode, RetrievalRun};

pub const MAX_GRADE: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct Document {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub image_path: Option<String>,
}

impl Document {
    /// Text handed to text-based providers: title and body joined by a newline.
    pub fn embed_text(&self) -> String {
        match (self.title.trim().is_empty(), self.text.trim().is_empty()) {
            (false, false) => format!("{}\n{}", self.title, self.text),
            (false, true) => self.title.clone(),
            _ => self.text.clone(),
        }
    }
}

/// Graded judgments; a missing pair means grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    judgments: BTreeMap<QueryId, BTreeMap<DocId, u8>>,
}

impl QrelSet {
    pub fn insert(&mut self, q: QueryId, d: DocId, grade: u8) -> Result<()> {
        if grade > MAX_GRADE {
            return Err(Error::InvalidData(format!("grade {grade} outside 0..={MAX_GRADE}")));
        }
        self.judgments.entry(q).or_default().insert(d, grade);
        Ok(())
    }

    pub fn grade(&self, q: &QueryId, d: &DocId) -> u8 {
        self.judgments.get(q).and_then(|m| m.get(d)).copied().unwrap_or(0)
    }

    pub fn for_query(&self, q: &QueryId) -> Option<&BTreeMap<DocId, u8>> {
        self.judgments.get(q)
    }

    pub fn positives(&self, q: &QueryId) -> Vec<&DocId> {
        self.judgments
            .get(q)
            .map(|m| m.iter().filter(|(_, &g)| g > 0).map(|(d, _)| d).collect())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &BTreeMap<DocId, u8>)> {
        self.judgments.iter()
    }

    /// Number of (query, doc) judgments.
    pub fn len(&self) -> usize {
        self.judgments.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkDataset {
    pub corpus: BTreeMap<DocId, Document>,
    pub queries: BTreeMap<QueryId, String>,
    pub qrels: QrelSet,
}

impl BenchmarkDataset {
    /// (documents, queries, judgments)
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.corpus.len(), self.queries.len(), self.qrels.len())
    }

    /// Checks references and that some query has a positive.
    pub fn validate(&self) -> Result<()> {
        let mut dangling = Vec::new();
        for (q, m) in self.qrels.iter() {
            if !self.queries.contains_key(q) {
                dangling.push(format!("query {q}"));
            }
            for d in m.keys() {
                if !self.corpus.contains_key(d) {
                    dangling.push(format!("doc {d}"));
                }
            }
        }
        dangling.dedup();
        if !dangling.is_empty() {
            return Err(Error::DanglingReference(dangling));
        }
        if !self.qrels.iter().any(|(_, m)| m.values().any(|&g| g > 0)) {
            return Err(Error::InvalidData("no query has a positive judgment".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct CorpusLine {
    #[serde(rename = "_id")]
    id: DocId,
    #[serde(flatten)]
    doc: Document,
}

#[derive(Deserialize)]
struct QueryLine {
    #[serde(rename = "_id")]
    id: QueryId,
    text: String,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|e| Error::parse(&file, i + 1, e.to_string()))
        })
        .collect()
}

fn read_qrels(path: &Path) -> Result<QrelSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut qrels = QrelSet::default();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() || (i == 0 && l.starts_with("query-id")) {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(&file, line, format!("expected 3 fields, got {}", f.len())));
        }
        let q = QueryId::new(f[0].trim()).map_err(|e| Error::parse(&file, line, e.to_string()))?;
        let d = DocId::new(f[1].trim()).map_err(|e| Error::parse(&file, line, e.to_string()))?;
        let grade: u8 = f[2]
            .trim()
            .parse()
            .ok()
            .filter(|&g| g <= MAX_GRADE)
            .ok_or_else(|| Error::parse(&file, line, format!("grade `{}` outside 0..={MAX_GRADE}", f[2].trim())))?;
        if qrels.for_query(&q).is_some_and(|m| m.contains_key(&d)) {
            return Err(Error::parse(&file, line, format!("duplicate judgment for ({q}, {d})")));
        }
        qrels.insert(q, d, grade)?;
    }
    Ok(qrels)
}

/// Reads `corpus.jsonl`, `queries.jsonl` and `qrels/test.tsv` from `dir`.
pub fn load_beir(dir: &Path) -> Result<BenchmarkDataset> {
    let mut corpus = BTreeMap::new();
    for (_, c) in read_jsonl::<CorpusLine>(&dir.join("corpus.jsonl"))? {
        if corpus.insert(c.id.clone(), c.doc).is_some() {
            return Err(Error::DuplicateId(c.id.to_string()));
        }
    }
    let mut queries = BTreeMap::new();
    for (_, q) in read_jsonl::<QueryLine>(&dir.join("queries.jsonl"))? {
        if queries.insert(q.id.clone(), q.text).is_some() {
            return Err(Error::DuplicateId(q.id.to_string()));
        }
    }
    let qrels = read_qrels(&dir.join("qrels").join("test.tsv"))?;
    let ds = BenchmarkDataset { corpus, queries, qrels };
    ds.validate()?;
    tracing::info!(
        docs = ds.corpus.len(),
        queries = ds.queries.len(),
        qrels = ds.qrels.len(),
        "loaded dataset"
    );
    Ok(ds)
}
