//! Similarity functions: cosine for dense vectors, MaxSim for token matrices.

use crate::error::{Error, Result};
use crate::vector::{dot, l2_norm, DenseEmbedding, MultiVectorEmbedding};

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimMismatch { expected, actual });
    }
    Ok(())
}

/// Cosine similarity of two raw slices, clamped to [-1, 1].
pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    let na = l2_norm(a);
    let nb = l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(q: &DenseEmbedding, d: &DenseEmbedding) -> Result<f64> {
    cosine_slices(q.values(), d.values())
}

/// Best-matching document token for one query token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenMatch {
    /// Lowest-index document row achieving the maximum.
    pub argmax: usize,
    pub max: f64,
}

fn row_norms(m: &MultiVectorEmbedding) -> Result<Vec<f64>> {
    m.rows()
        .map(|r| {
            let n = l2_norm(r);
            if n == 0.0 {
                Err(Error::ZeroVector)
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Full `n_q x n_d` cosine matrix, row-major.
pub fn token_similarities(q: &MultiVectorEmbedding, d: &MultiVectorEmbedding) -> Result<Vec<f64>> {
    check_dims(q.dim(), d.dim())?;
    let qn = row_norms(q)?;
    let dn = row_norms(d)?;
    let mut out = Vec::with_capacity(q.n_tokens() * d.n_tokens());
    for (qr, &qnorm) in q.rows().zip(&qn) {
        for (dr, &dnorm) in d.rows().zip(&dn) {
            out.push((dot(qr, dr) / (qnorm * dnorm)).clamp(-1.0, 1.0));
        }
    }
    Ok(out)
}

/// Per-query-token maxima with their argmax rows.
pub fn maxsim_matches(q: &MultiVectorEmbedding, d: &MultiVectorEmbedding) -> Result<Vec<TokenMatch>> {
    let sims = token_similarities(q, d)?;
    Ok(sims
        .chunks_exact(d.n_tokens())
        .map(|row| {
            let mut best = TokenMatch { argmax: 0, max: row[0] };
            for (j, &s) in row.iter().enumerate().skip(1) {
                if s > best.max {
                    best = TokenMatch { argmax: j, max: s };
                }
            }
            best
        })
        .collect())
}

/// Late-interaction score: sum over query tokens of the best cosine to any doc token.
pub fn maxsim(q: &MultiVectorEmbedding, d: &MultiVectorEmbedding) -> Result<f64> {
    Ok(maxsim_matches(q, d)?.iter().map(|m| m.max).sum())
}

/// MaxSim divided by the number of query tokens.
pub fn maxsim_normalized(q: &MultiVectorEmbedding, d: &MultiVectorEmbedding) -> Result<f64> {
    Ok(maxsim(q, d)? / q.n_tokens() as f64)
}
