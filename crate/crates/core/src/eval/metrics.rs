use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{QrelSet, RetrievalRun};
use crate::error::{Error, Result};
use crate::vector::{sort_ranked, DocId, QueryId, ScoredDoc};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg(usize),
    Recall(usize),
    Map(usize),
    Mrr(usize),
}

pub const DEFAULT_METRICS: [Metric; 6] = [
    Metric::Ndcg(5),
    Metric::Ndcg(10),
    Metric::Recall(5),
    Metric::Recall(10),
    Metric::Map(10),
    Metric::Mrr(10),
];

impl Metric {
    pub fn k(self) -> usize {
        match self {
            Self::Ndcg(k) | Self::Recall(k) | Self::Map(k) | Self::Mrr(k) => k,
        }
    }

    /// Per-query value; `None` when the query has no positive judgment.
    pub fn score(self, ranked: &[DocId], grades: &BTreeMap<DocId, u8>) -> Option<f64> {
        match self {
            Self::Ndcg(k) => ndcg(ranked, grades, k),
            Self::Recall(k) => recall(ranked, grades, k),
            Self::Map(k) => average_precision(ranked, grades, k),
            Self::Mrr(k) => reciprocal_rank(ranked, grades, k),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, k) = match *self {
            Self::Ndcg(k) => ("ndcg", k),
            Self::Recall(k) => ("recall", k),
            Self::Map(k) => ("map", k),
            Self::Mrr(k) => ("mrr", k),
        };
        write!(f, "{name}@{k}")
    }
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown metric `{s}` (expected e.g. ndcg@5)"));
        let (name, k) = s.trim().split_once('@').ok_or_else(bad)?;
        let k: usize = k.parse().ok().filter(|&k| k >= 1).ok_or_else(bad)?;
        Ok(match name.to_ascii_lowercase().as_str() {
            "ndcg" => Self::Ndcg(k),
            "recall" => Self::Recall(k),
            "map" => Self::Map(k),
            "mrr" => Self::Mrr(k),
            _ => return Err(bad()),
        })
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

pub fn parse_metrics(list: &str) -> Result<Vec<Metric>> {
    let mut out: Vec<Metric> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.dedup();
    if out.is_empty() {
        return Err(Error::InvalidConfig("no metrics requested".into()));
    }
    Ok(out)
}

fn grade(grades: &BTreeMap<DocId, u8>, d: &DocId) -> u8 {
    grades.get(d).copied().unwrap_or(0)
}

fn positives(grades: &BTreeMap<DocId, u8>) -> usize {
    grades.values().filter(|&&g| g > 0).count()
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Linear gain, `log2(rank + 1)` discount.
pub fn ndcg(ranked: &[DocId], grades: &BTreeMap<DocId, u8>, k: usize) -> Option<f64> {
    let mut ideal: Vec<u8> = grades.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| g as f64 * discount(i + 1))
        .sum();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| grade(grades, d) as f64 * discount(i + 1))
        .sum();
    Some(dcg / idcg)
}

pub fn recall(ranked: &[DocId], grades: &BTreeMap<DocId, u8>, k: usize) -> Option<f64> {
    let r = positives(grades);
    if r == 0 {
        return None;
    }
    let hits = ranked.iter().take(k).filter(|d| grade(grades, d) > 0).count();
    Some(hits as f64 / r as f64)
}

/// Binary relevance; precision at each hit summed over the top k and divided
/// by the total number of positives.
pub fn average_precision(ranked: &[DocId], grades: &BTreeMap<DocId, u8>, k: usize) -> Option<f64> {
    let r = positives(grades);
    if r == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranked.iter().take(k).enumerate() {
        if grade(grades, d) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / r as f64)
}

pub fn reciprocal_rank(ranked: &[DocId], grades: &BTreeMap<DocId, u8>, k: usize) -> Option<f64> {
    if positives(grades) == 0 {
        return None;
    }
    Some(
        ranked
            .iter()
            .take(k)
            .position(|d| grade(grades, d) > 0)
            .map_or(0.0, |i| 1.0 / (i + 1) as f64),
    )
}

/// Per-query values and their mean over queries with at least one positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub metric: Metric,
    pub mean: f64,
    pub per_query: BTreeMap<QueryId, f64>,
}

fn canonical(list: &[ScoredDoc]) -> Vec<DocId> {
    let mut l = list.to_vec();
    sort_ranked(&mut l);
    l.into_iter().map(|s| s.doc).collect()
}

/// Scores every judged query with a positive. Lists are re-sorted with the
/// canonical tie-break first; a judged query missing from the run scores 0.
pub fn evaluate_metric(run: &RetrievalRun, qrels: &QrelSet, metric: Metric) -> MetricValues {
    let empty = Vec::new();
    let mut per_query = BTreeMap::new();
    for (q, grades) in qrels.iter() {
        let ranked = canonical(run.lists.get(q).unwrap_or(&empty));
        if let Some(v) = metric.score(&ranked, grades) {
            per_query.insert(q.clone(), v);
        }
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    MetricValues {
        metric,
        mean,
        per_query,
    }
}

pub fn ndcg_at_k(run: &RetrievalRun, qrels: &QrelSet, k: usize) -> MetricValues {
    evaluate_metric(run, qrels, Metric::Ndcg(k))
}

pub fn recall_at_k(run: &RetrievalRun, qrels: &QrelSet, k: usize) -> MetricValues {
    evaluate_metric(run, qrels, Metric::Recall(k))
}

pub fn map_at_k(run: &RetrievalRun, qrels: &QrelSet, k: usize) -> MetricValues {
    evaluate_metric(run, qrels, Metric::Map(k))
}

pub fn mrr_at_k(run: &RetrievalRun, qrels: &QrelSet, k: usize) -> MetricValues {
    evaluate_metric(run, qrels, Metric::Mrr(k))
}
