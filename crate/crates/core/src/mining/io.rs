//! Ranking, sidecar, page and negatives files.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{PageRef, TextSidecar};
use crate::error::{Error, Result};
use crate::vector::{DocId, QueryId, ScoredDoc};

pub type Rankings = BTreeMap<QueryId, Vec<ScoredDoc>>;

fn read(path: &Path) -> Result<(String, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok((text, path.display().to_string()))
}

fn fields<'a>(raw: &'a str, n: usize, file: &str, line: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = raw.split('\t').collect();
    if f.len() != n {
        return Err(Error::parse(
            file,
            line,
            format!("expected {n} tab-separated fields, got {}", f.len()),
        ));
    }
    Ok(f)
}

fn id_field<T: TryFrom<String, Error = Error>>(s: &str, file: &str, line: usize) -> Result<T> {
    T::try_from(s.trim().to_string()).map_err(|e| Error::parse(file, line, e.to_string()))
}

/// `query-id <TAB> doc-id <TAB> rank <TAB> score`, lists ordered by rank.
/// A leading `query-id` header line is skipped.
pub fn read_rankings(path: &Path) -> Result<Rankings> {
    let (text, file) = read(path)?;
    let mut raw: BTreeMap<QueryId, Vec<(u64, ScoredDoc)>> = BTreeMap::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() || (i == 0 && l.starts_with("query-id")) {
            continue;
        }
        let f = fields(l, 4, &file, line)?;
        let q: QueryId = id_field(f[0], &file, line)?;
        let d: DocId = id_field(f[1], &file, line)?;
        let rank: u64 = f[2]
            .trim()
            .parse()
            .ok()
            .filter(|&r| r >= 1)
            .ok_or_else(|| Error::parse(&file, line, format!("bad rank `{}`", f[2])))?;
        let score: f64 = f[3]
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite())
            .ok_or_else(|| Error::parse(&file, line, format!("bad score `{}`", f[3])))?;
        raw.entry(q).or_default().push((rank, ScoredDoc::new(d, score)));
    }
    let mut out = Rankings::new();
    for (q, mut list) in raw {
        list.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.doc.cmp(&b.1.doc)));
        let mut seen = HashSet::new();
        for (_, sd) in &list {
            if !seen.insert(&sd.doc) {
                return Err(Error::DuplicateId(format!("{} in ranking for {q}", sd.doc)));
            }
        }
        out.insert(q, list.into_iter().map(|(_, sd)| sd).collect());
    }
    Ok(out)
}

/// Ranks are written 1-based in list order.
pub fn format_rankings(rankings: &Rankings) -> String {
    let mut s = String::new();
    for (q, list) in rankings {
        for (i, sd) in list.iter().enumerate() {
            let _ = writeln!(s, "{q}\t{}\t{}\t{}", sd.doc, i + 1, sd.score);
        }
    }
    s
}

pub fn write_rankings(path: &Path, rankings: &Rankings) -> Result<()> {
    fs::write(path, format_rankings(rankings)).map_err(|e| Error::io(path, e))
}

/// JSONL `{"_id": ..., "text": ...}`.
pub fn read_sidecars(path: &Path) -> Result<Vec<TextSidecar>> {
    let (text, file) = read(path)?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        let s: TextSidecar = serde_json::from_str(l).map_err(|e| Error::parse(&file, i + 1, e.to_string()))?;
        if !seen.insert(s.doc.clone()) {
            return Err(Error::DuplicateId(s.doc.to_string()));
        }
        out.push(s);
    }
    Ok(out)
}

/// `doc-id <TAB> source-doc <TAB> page-no`, optional `doc-id` header.
pub fn read_pages(path: &Path) -> Result<Vec<PageRef>> {
    let (text, file) = read(path)?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() || (i == 0 && l.starts_with("doc-id")) {
            continue;
        }
        let f = fields(l, 3, &file, line)?;
        let source_doc = f[1].trim();
        if source_doc.is_empty() {
            return Err(Error::parse(&file, line, "empty source document"));
        }
        out.push(PageRef {
            doc: id_field(f[0], &file, line)?,
            source_doc: source_doc.to_string(),
            page_no: f[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(&file, line, format!("bad page number `{}`", f[2])))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativesRow {
    pub query: QueryId,
    pub positive: DocId,
    pub negatives: Vec<DocId>,
}

/// `query-id <TAB> positive-id <TAB> neg1,neg2,...`
pub fn format_negatives(rows: &[NegativesRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let negs: Vec<&str> = r.negatives.iter().map(DocId::as_str).collect();
        let _ = writeln!(s, "{}\t{}\t{}", r.query, r.positive, negs.join(","));
    }
    s
}

pub fn write_negatives(path: &Path, rows: &[NegativesRow]) -> Result<()> {
    fs::write(path, format_negatives(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_negatives(path: &Path) -> Result<Vec<NegativesRow>> {
    let (text, file) = read(path)?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let line = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let f = fields(l, 3, &file, line)?;
        let negatives = f[2]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| id_field(s, &file, line))
            .collect::<Result<_>>()?;
        out.push(NegativesRow {
            query: id_field(f[0], &file, line)?,
            positive: id_field(f[1], &file, line)?,
            negatives,
        });
    }
    Ok(out)
}
