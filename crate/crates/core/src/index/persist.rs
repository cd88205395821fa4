//! Index directory layout:
//!
//! - `meta.json`: format version, kind, dim, count, ANN params, provider
//! - `ids.txt`: one document id per line, in row order
//! - `vectors.bin`: row-major little-endian f32 rows
//! - `hnsw.bin`: optional graph, see [`HnswGraph::to_bytes`]
//! - `token_counts.bin`: multi-vector only, one little-endian u32 per document

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DenseIndex, HnswGraph, HnswParams, MultiVectorIndex};
use crate::error::{Error, Result};
use crate::providers::ProviderKind;
use crate::vector::{l2_norm, DocId, MultiVectorEmbedding, UNIT_NORM_TOL};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Dense,
    Multivector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub format_version: u32,
    pub kind: IndexKind,
    pub dim: usize,
    pub count: usize,
    pub ann: Option<HnswParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<ProviderKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum StoredIndex {
    Dense(DenseIndex),
    MultiVector(MultiVectorIndex),
}

impl StoredIndex {
    pub fn len(&self) -> usize {
        match self {
            Self::Dense(i) => i.len(),
            Self::MultiVector(i) => i.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(i) => i.dim(),
            Self::MultiVector(i) => i.dim(),
        }
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn f32s_to_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn bytes_to_f32s(bytes: &[u8], what: &str) -> Result<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::InvalidData(format!("{what}: length is not a multiple of 4")));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn check_unit_rows(data: &[f32], dim: usize) -> Result<()> {
    for (i, row) in data.chunks_exact(dim).enumerate() {
        if (l2_norm(row) - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::InvalidData(format!("vectors.bin: row {i} is not unit-norm")));
        }
    }
    Ok(())
}

fn ids_text(ids: &[DocId]) -> Vec<u8> {
    let mut s = String::new();
    for id in ids {
        s.push_str(id.as_str());
        s.push('\n');
    }
    s.into_bytes()
}

/// Writes `index` into `dir`, creating it if needed.
pub fn save_index(
    dir: &Path,
    index: &StoredIndex,
    provider: Option<&ProviderKind>,
    max_tokens: Option<usize>,
) -> Result<IndexMeta> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = match index {
        StoredIndex::Dense(idx) => {
            write(&dir.join("ids.txt"), &ids_text(idx.ids()))?;
            write(&dir.join("vectors.bin"), &f32s_to_bytes(idx.matrix()))?;
            let hnsw_path = dir.join("hnsw.bin");
            match idx.ann() {
                Some(g) => write(&hnsw_path, &g.to_bytes())?,
                None if hnsw_path.exists() => fs::remove_file(&hnsw_path).map_err(|e| Error::io(&hnsw_path, e))?,
                None => {}
            }
            IndexMeta {
                format_version: FORMAT_VERSION,
                kind: IndexKind::Dense,
                dim: idx.dim(),
                count: idx.len(),
                ann: idx.ann().map(HnswGraph::params),
                provider: provider.cloned(),
                max_tokens: None,
            }
        }
        StoredIndex::MultiVector(idx) => {
            write(&dir.join("ids.txt"), &ids_text(idx.ids()))?;
            let mut vectors = Vec::new();
            let mut counts = Vec::new();
            for d in idx.docs() {
                vectors.extend(f32s_to_bytes(d.as_flat()));
                counts.extend((d.n_tokens() as u32).to_le_bytes());
            }
            write(&dir.join("vectors.bin"), &vectors)?;
            write(&dir.join("token_counts.bin"), &counts)?;
            IndexMeta {
                format_version: FORMAT_VERSION,
                kind: IndexKind::Multivector,
                dim: idx.dim(),
                count: idx.len(),
                ann: None,
                provider: provider.cloned(),
                max_tokens,
            }
        }
    };
    let mut json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Internal(e.to_string()))?;
    json.push('\n');
    write(&dir.join("meta.json"), json.as_bytes())?;
    Ok(meta)
}

pub fn load_index(dir: &Path) -> Result<(IndexMeta, StoredIndex)> {
    let meta_path = dir.join("meta.json");
    let meta: IndexMeta = serde_json::from_slice(&read(&meta_path)?)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.line(), e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::InvalidData(format!(
            "unsupported index format version {}",
            meta.format_version
        )));
    }
    if meta.dim == 0 {
        return Err(Error::InvalidData("meta.json: dim must be >= 1".into()));
    }
    let ids_path = dir.join("ids.txt");
    let ids_raw = String::from_utf8(read(&ids_path)?)
        .map_err(|_| Error::parse(ids_path.display().to_string(), 0, "ids.txt is not UTF-8"))?;
    let ids = ids_raw.lines().map(DocId::new).collect::<Result<Vec<_>>>()?;
    if ids.len() != meta.count {
        return Err(Error::InvalidData(format!(
            "ids.txt has {} ids, meta.json says {}",
            ids.len(),
            meta.count
        )));
    }
    let data = bytes_to_f32s(&read(&dir.join("vectors.bin"))?, "vectors.bin")?;
    check_unit_rows(&data, meta.dim)?;

    let index = match meta.kind {
        IndexKind::Dense => {
            let ann = match meta.ann {
                Some(params) => Some(HnswGraph::from_bytes(&read(&dir.join("hnsw.bin"))?, params)?),
                None => None,
            };
            StoredIndex::Dense(DenseIndex::from_parts(ids, data, meta.dim, ann)?)
        }
        IndexKind::Multivector => {
            let counts_raw = read(&dir.join("token_counts.bin"))?;
            if counts_raw.len() != 4 * meta.count {
                return Err(Error::InvalidData("token_counts.bin length mismatch".into()));
            }
            let counts: Vec<usize> = counts_raw
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
                .collect();
            let total: usize = counts.iter().sum();
            if total * meta.dim != data.len() {
                return Err(Error::InvalidData(
                    "vectors.bin length does not match token counts".into(),
                ));
            }
            let mut records = Vec::with_capacity(ids.len());
            let mut offset = 0;
            for (id, n) in ids.into_iter().zip(counts) {
                let end = offset + n * meta.dim;
                let m = MultiVectorEmbedding::from_flat(data[offset..end].to_vec(), n, meta.dim)?;
                records.push((id, m));
                offset = end;
            }
            StoredIndex::MultiVector(super::build_multivector_index(records)?)
        }
    };
    Ok((meta, index))
}
