//! Embedding types, id newtypes and the canonical ranked-list order.
//!
//! Values are stored as `f32`; every reduction (dot products, norms) is
//! accumulated in `f64` and only rounded when written back.

use std::borrow::Borrow;
use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a vector is unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

#[inline]
pub fn l2_norm(v: &[f32]) -> f64 {
    dot(v, v).sqrt()
}

fn scaled(v: &[f32], norm: f64) -> Vec<f32> {
    v.iter().map(|&x| (x as f64 / norm) as f32).collect()
}

/// One vector per query or document.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEmbedding {
    values: Vec<f32>,
}

impl DenseEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidData("embedding must have dim >= 1".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("embedding contains non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn is_unit(&self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_NORM_TOL
    }

    /// Scales the vector to unit L2 norm. All-zero input is an error.
    pub fn normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            values: scaled(&self.values, norm),
        })
    }

    /// Keeps the first `d` components and re-normalizes them (Matryoshka prefix).
    pub fn truncate_and_normalize(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.dim() {
            return Err(Error::DimError {
                requested: d,
                available: self.dim(),
            });
        }
        let prefix = &self.values[..d];
        let norm = l2_norm(prefix);
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            values: scaled(prefix, norm),
        })
    }
}

/// Per-token embedding matrix, row-major `n_tokens x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorEmbedding {
    data: Vec<f32>,
    n_tokens: usize,
    dim: usize,
}

impl MultiVectorEmbedding {
    pub fn from_flat(data: Vec<f32>, n_tokens: usize, dim: usize) -> Result<Self> {
        if n_tokens == 0 || dim == 0 {
            return Err(Error::InvalidData(
                "multi-vector embedding needs n_tokens >= 1 and dim >= 1".into(),
            ));
        }
        if data.len() != n_tokens * dim {
            return Err(Error::DimMismatch {
                expected: n_tokens * dim,
                actual: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("embedding contains non-finite values".into()));
        }
        Ok(Self { data, n_tokens, dim })
    }

    pub fn from_rows(rows: Vec<Vec<f32>>) -> Result<Self> {
        let n_tokens = rows.len();
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(n_tokens * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend(row);
        }
        Self::from_flat(data, n_tokens, dim)
    }

    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn rows_are_unit(&self) -> bool {
        self.rows().all(|r| (l2_norm(r) - 1.0).abs() <= UNIT_NORM_TOL)
    }

    pub fn normalize_rows(&self) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(Error::ZeroVector);
            }
            data.extend(scaled(row, norm));
        }
        Ok(Self {
            data,
            n_tokens: self.n_tokens,
            dim: self.dim,
        })
    }
}

macro_rules! text_id {
    ($name:ident, $what:literal) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Result<Self> {
                let id = id.into();
                if id.is_empty() {
                    return Err(Error::InvalidData(concat!($what, " id must be non-empty").into()));
                }
                Ok(Self(id))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(s: String) -> Result<Self> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

text_id!(DocId, "document");
text_id!(QueryId, "query");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub doc: DocId,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc: DocId, score: f64) -> Self {
        Self { doc, score }
    }
}

/// Descending score, then ascending doc id.
pub fn rank_order(a: &ScoredDoc, b: &ScoredDoc) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.doc.cmp(&b.doc))
}

pub fn sort_ranked(list: &mut [ScoredDoc]) {
    list.sort_by(rank_order);
}
