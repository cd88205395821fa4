use serde::Serialize;

use crate::index::StoredIndex;

pub const BYTES_PER_VALUE: u64 = 4;

pub fn dense_bytes_per_doc(dim: usize) -> u64 {
    dim as u64 * BYTES_PER_VALUE
}

pub fn multivector_bytes_per_doc(n_tokens: usize, dim: usize) -> u64 {
    n_tokens as u64 * dim as u64 * BYTES_PER_VALUE
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageEntry {
    pub label: String,
    pub docs: u64,
    /// Mean over documents for multi-vector indexes.
    pub bytes_per_doc: f64,
    pub total_bytes: u64,
}

impl StorageEntry {
    pub fn dense(dim: usize, docs: u64) -> Self {
        let b = dense_bytes_per_doc(dim);
        Self {
            label: format!("dense-{dim}"),
            docs,
            bytes_per_doc: b as f64,
            total_bytes: b * docs,
        }
    }

    pub fn multivector(n_tokens: usize, dim: usize, docs: u64) -> Self {
        let b = multivector_bytes_per_doc(n_tokens, dim);
        Self {
            label: format!("multivector-{n_tokens}x{dim}"),
            docs,
            bytes_per_doc: b as f64,
            total_bytes: b * docs,
        }
    }

    /// Vector payload of a built index (ids and graph excluded).
    pub fn from_index(label: impl Into<String>, index: &StoredIndex) -> Self {
        let docs = index.len() as u64;
        let total_bytes = match index {
            StoredIndex::Dense(ix) => dense_bytes_per_doc(ix.dim()) * docs,
            StoredIndex::MultiVector(ix) => multivector_bytes_per_doc(ix.total_tokens(), ix.dim()),
        };
        Self {
            label: label.into(),
            docs,
            bytes_per_doc: if docs == 0 {
                0.0
            } else {
                total_bytes as f64 / docs as f64
            },
            total_bytes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageReport {
    pub entries: Vec<StorageEntry>,
    /// `ratios[i][j]` = bytes/doc of entry i over entry j.
    pub ratios: Vec<Vec<f64>>,
}

pub fn storage_report(entries: Vec<StorageEntry>) -> StorageReport {
    let ratios = entries
        .iter()
        .map(|a| {
            entries
                .iter()
                .map(|b| {
                    if b.bytes_per_doc == 0.0 {
                        f64::NAN
                    } else {
                        a.bytes_per_doc / b.bytes_per_doc
                    }
                })
                .collect()
        })
        .collect();
    StorageReport { entries, ratios }
}

impl StorageReport {
    pub fn to_text(&self) -> String {
        let mut s = String::from("config\tdocs\tbytes_per_doc\ttotal_bytes\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{}\t{}\t{:.0}\t{}\n",
                e.label, e.docs, e.bytes_per_doc, e.total_bytes
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_two_sizes() {
        assert_eq!(dense_bytes_per_doc(2560), 10_240);
        assert_eq!(dense_bytes_per_doc(1536), 6_144);
        assert_eq!(dense_bytes_per_doc(768), 3_072);
        assert_eq!(multivector_bytes_per_doc(256, 128), 131_072);
    }

    #[test]
    fn ratios() {
        let r = storage_report(vec![StorageEntry::dense(768, 10), StorageEntry::dense(2560, 10)]);
        assert!((r.ratios[1][0] - 2560.0 / 768.0).abs() < 1e-12);
        assert_eq!(r.entries[1].total_bytes, 102_400);
    }
}
