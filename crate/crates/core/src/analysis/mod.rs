//! Plot-ready exports: PCA projections, MaxSim heatmaps, storage accounting.

mod heatmap;
mod pca;
mod storage;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::providers::{load_precomputed, EmbeddingPayload};

pub use heatmap::{infer_grid, maxsim_heatmap, HeatmapGrid};
pub use pca::{pca_project, PointLabel, Projection2D, Role, EXACT_DIM_LIMIT, POWER_ITERATIONS};
pub use storage::{dense_bytes_per_doc, multivector_bytes_per_doc, storage_report, StorageEntry, StorageReport};

/// `id <TAB> language <TAB> role`, optional `id` header.
pub fn read_labels(path: &Path) -> Result<HashMap<String, PointLabel>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = path.display().to_string();
    let mut out = HashMap::new();
    for (i, l) in text.lines().enumerate() {
        if l.trim().is_empty() || (i == 0 && l.starts_with("id\t")) {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            return Err(Error::parse(
                &file,
                i + 1,
                format!("expected 3 fields, got {}", f.len()),
            ));
        }
        let role = f[2]
            .parse()
            .map_err(|e: Error| Error::parse(&file, i + 1, e.to_string()))?;
        let label = PointLabel {
            id: f[0].to_string(),
            language: f[1].to_string(),
            role,
        };
        if out.insert(label.id.clone(), label).is_some() {
            return Err(Error::DuplicateId(f[0].to_string()));
        }
    }
    Ok(out)
}

/// Dense rows of a precomputed file in id order, each paired with its label.
fn labelled_rows(path: &Path, labels: &HashMap<String, PointLabel>) -> Result<(Vec<Vec<f32>>, Vec<PointLabel>)> {
    let records = load_precomputed(path)?;
    let missing: Vec<String> = records.keys().filter(|k| !labels.contains_key(*k)).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::DanglingReference(missing));
    }
    let mut rows = Vec::with_capacity(records.len());
    let mut out_labels = Vec::with_capacity(records.len());
    for (id, rec) in records {
        match rec.payload {
            EmbeddingPayload::Dense(d) => rows.push(d.into_values()),
            EmbeddingPayload::MultiVector(_) => {
                return Err(Error::InvalidData(format!(
                    "{}: PCA needs dense records",
                    path.display()
                )))
            }
        }
        out_labels.push(labels[&id].clone());
    }
    Ok((rows, out_labels))
}

/// Checkpoint name for a file: its stem.
pub fn checkpoint_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into())
}

/// Fits one projection per embedding file, independently.
pub fn pca_series(
    files: &[PathBuf],
    labels: &HashMap<String, PointLabel>,
    seed: u64,
) -> Result<Vec<(String, Projection2D)>> {
    files
        .par_iter()
        .map(|f| {
            let (rows, l) = labelled_rows(f, labels)?;
            Ok((checkpoint_name(f), pca_project(&rows, l, seed)?))
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// `pca_<checkpoint>.csv` per projection plus `variance.json`.
pub fn write_pca_outputs(dir: &Path, series: &[(String, Projection2D)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut variance = BTreeMap::new();
    for (name, p) in series {
        let path = dir.join(format!("pca_{name}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["id", "x", "y", "language", "role", "checkpoint"])
            .map_err(|e| csv_err(&path, e))?;
        for (pt, l) in p.points.iter().zip(&p.labels) {
            w.write_record([
                l.id.as_str(),
                &pt[0].to_string(),
                &pt[1].to_string(),
                &l.language,
                l.role.as_str(),
                name,
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        variance.insert(name.clone(), p.explained_variance_ratio);
    }
    let path = dir.join("variance.json");
    write_json(&path, &variance)?;
    written.push(path);
    Ok(written)
}

#[derive(Serialize)]
struct HeatmapToken {
    token: usize,
    token_max: f64,
    argmax: (usize, usize),
    file: String,
}

#[derive(Serialize)]
struct HeatmapSummary {
    rows: usize,
    cols: usize,
    maxsim: f64,
    tokens: Vec<HeatmapToken>,
}

/// `heatmap_token<t>.csv` (`row,col,value`) per query token and `heatmap.json`.
pub fn write_heatmap_outputs(dir: &Path, grids: &[HeatmapGrid]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut tokens = Vec::new();
    for g in grids {
        let name = format!("heatmap_token{}.csv", g.query_token);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["row", "col", "value"]).map_err(|e| csv_err(&path, e))?;
        for r in 0..g.rows {
            for c in 0..g.cols {
                w.write_record([r.to_string(), c.to_string(), g.at(r, c).to_string()])
                    .map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        tokens.push(HeatmapToken {
            token: g.query_token,
            token_max: g.token_max,
            argmax: g.token_argmax,
            file: name,
        });
    }
    let summary = HeatmapSummary {
        rows: grids.first().map_or(0, |g| g.rows),
        cols: grids.first().map_or(0, |g| g.cols),
        maxsim: grids.iter().map(|g| g.token_max).sum(),
        tokens,
    };
    let path = dir.join("heatmap.json");
    write_json(&path, &summary)?;
    written.push(path);
    Ok(written)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
