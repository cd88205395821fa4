//! Hashed character 3-gram embedder.
//!
//! Each 3-gram of the lowercased, whitespace-collapsed text is hashed with a
//! seeded xxh3 into one of `dim` buckets with a ±1 sign. The bag is then
//! L2-normalized. Texts shorter than three characters form a single gram.

use xxhash_rust::xxh3::xxh3_64_with_seed;

use super::{EmbedInput, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::vector::{DenseEmbedding, MultiVectorEmbedding};

pub const MIN_SYNTHETIC_DIM: usize = 8;
const GRAM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticProvider {
    seed: u64,
    dim: usize,
}

fn canonical(text: &str) -> Result<Vec<char>> {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if joined.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(joined.to_lowercase().chars().collect())
}

impl SyntheticProvider {
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < MIN_SYNTHETIC_DIM {
            return Err(Error::InvalidConfig(format!(
                "synthetic provider dim must be >= {MIN_SYNTHETIC_DIM}, got {dim}"
            )));
        }
        Ok(Self { seed, dim })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn bag(&self, chars: &[char]) -> Vec<f32> {
        let mut acc = vec![0i64; self.dim];
        let mut buf = [0u8; 4 * GRAM];
        let mut hit = |gram: &[char]| {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = xxh3_64_with_seed(&buf[..len], self.seed);
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 0 { 1 } else { -1 };
        };
        if chars.len() < GRAM {
            hit(chars);
        } else {
            chars.windows(GRAM).for_each(&mut hit);
        }
        acc.into_iter().map(|x| x as f32).collect()
    }

    pub fn embed_text(&self, text: &str) -> Result<DenseEmbedding> {
        let chars = canonical(text)?;
        let raw = DenseEmbedding::new(self.bag(&chars))?;
        match raw.normalize() {
            Ok(v) => Ok(v),
            // Every gram cancelled out; fall back to the first gram alone.
            Err(Error::ZeroVector) => DenseEmbedding::new(self.bag(&chars[..GRAM.min(chars.len())]))?.normalize(),
            Err(e) => Err(e),
        }
    }

    /// Splits on whitespace into at most `max_tokens` pieces (the last piece
    /// keeps any remainder) and embeds each piece.
    pub fn embed_text_multivector(&self, text: &str, max_tokens: usize) -> Result<MultiVectorEmbedding> {
        if max_tokens == 0 {
            return Err(Error::InvalidConfig("max_tokens must be >= 1".into()));
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::EmptyText);
        }
        let pieces: Vec<String> = if words.len() <= max_tokens {
            words.iter().map(|w| w.to_string()).collect()
        } else {
            let mut p: Vec<String> = words[..max_tokens - 1].iter().map(|w| w.to_string()).collect();
            p.push(words[max_tokens - 1..].join(" "));
            p
        };
        let mut data = Vec::with_capacity(pieces.len() * self.dim);
        for p in &pieces {
            data.extend_from_slice(self.embed_text(p)?.values());
        }
        MultiVectorEmbedding::from_flat(data, pieces.len(), self.dim)
    }
}

impl EmbeddingProvider for SyntheticProvider {
    fn embed_dense(&self, input: &EmbedInput<'_>) -> Result<DenseEmbedding> {
        self.embed_text(input.text)
    }

    fn embed_multivector(&self, input: &EmbedInput<'_>, max_tokens: usize) -> Result<MultiVectorEmbedding> {
        self.embed_text_multivector(input.text, max_tokens)
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }
}
