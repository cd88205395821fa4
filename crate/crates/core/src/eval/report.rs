use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_metric, Metric, MetricValues};
use super::{QrelSet, RetrievalRun};
use crate::error::{Error, Result};
use crate::vector::QueryId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<MetricValues>,
}

impl MetricReport {
    pub fn get(&self, m: Metric) -> Option<&MetricValues> {
        self.metrics.iter().find(|v| v.metric == m)
    }

    pub fn mean(&self, m: Metric) -> Option<f64> {
        self.get(m).map(|v| v.mean)
    }

    fn queries(&self) -> BTreeSet<&QueryId> {
        self.metrics.iter().flat_map(|v| v.per_query.keys()).collect()
    }

    /// Means first, then one row per query.
    pub fn to_text(&self) -> String {
        let mut s = String::from("metric\tmean\tqueries\n");
        for v in &self.metrics {
            let _ = writeln!(s, "{}\t{:.6}\t{}", v.metric, v.mean, v.per_query.len());
        }
        s.push_str("\nquery-id");
        for v in &self.metrics {
            let _ = write!(s, "\t{}", v.metric);
        }
        s.push('\n');
        for q in self.queries() {
            s.push_str(q.as_str());
            for v in &self.metrics {
                match v.per_query.get(q) {
                    Some(x) => {
                        let _ = write!(s, "\t{x:.6}");
                    }
                    None => s.push_str("\t-"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Computes `metrics` on `run`. A cutoff deeper than the run is still
/// computed on what is there, with a warning.
pub fn evaluate(run: &RetrievalRun, qrels: &QrelSet, metrics: &[Metric]) -> MetricReport {
    let depth = run.depth();
    for m in metrics {
        if m.k() > depth {
            tracing::warn!(metric = %m, depth, "run is shallower than the metric cutoff; using available depth");
        }
    }
    MetricReport {
        metrics: metrics.iter().map(|&m| evaluate_metric(run, qrels, m)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub metric: Metric,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    /// `(a − b) / b`; `None` when `b` is 0.
    pub relative: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::from("metric\ta\tb\tdelta\trelative\n");
        for r in &self.rows {
            let rel = r
                .relative
                .map_or_else(|| "undefined".to_string(), |x| format!("{:.1}%", 100.0 * x));
            let _ = writeln!(s, "{}\t{:.6}\t{:.6}\t{:+.6}\t{rel}", r.metric, r.a, r.b, r.delta);
        }
        s
    }
}

/// Per-metric deltas of `a` over baseline `b`, for metrics present in both.
pub fn compare_runs(a: &MetricReport, b: &MetricReport) -> Result<Comparison> {
    if a.queries() != b.queries() {
        return Err(Error::QueryMismatch);
    }
    let rows = a
        .metrics
        .iter()
        .filter_map(|va| b.get(va.metric).map(|vb| (va, vb)))
        .map(|(va, vb)| ComparisonRow {
            metric: va.metric,
            a: va.mean,
            b: vb.mean,
            delta: va.mean - vb.mean,
            relative: (vb.mean != 0.0).then(|| (va.mean - vb.mean) / vb.mean),
        })
        .collect();
    Ok(Comparison { rows })
}
