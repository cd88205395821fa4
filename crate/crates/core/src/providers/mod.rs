//! Embedding sources. Pooling and any model forward pass happen upstream of
//! this boundary; providers only hand back finished vectors.

mod precomputed;
mod remote;
mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{DenseEmbedding, MultiVectorEmbedding};

pub use precomputed::{
    load_precomputed, write_precomputed, EmbeddingPayload, EmbeddingRecord, PrecomputedProvider, RecordKind,
};
pub use remote::{RemoteProvider, DEFAULT_MAX_IN_FLIGHT};
pub use synthetic::{SyntheticProvider, MIN_SYNTHETIC_DIM};

/// What to embed. Text-based providers read `text`; lookup providers read `key`.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub key: &'a str,
    pub text: &'a str,
}

impl<'a> EmbedInput<'a> {
    pub fn text(text: &'a str) -> Self {
        Self { key: text, text }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed_dense(&self, input: &EmbedInput<'_>) -> Result<DenseEmbedding>;

    fn embed_multivector(&self, input: &EmbedInput<'_>, max_tokens: usize) -> Result<MultiVectorEmbedding>;

    fn embed_dense_batch(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<DenseEmbedding>> {
        inputs.iter().map(|i| self.embed_dense(i)).collect()
    }

    fn embed_multivector_batch(
        &self,
        inputs: &[EmbedInput<'_>],
        max_tokens: usize,
    ) -> Result<Vec<MultiVectorEmbedding>> {
        inputs.iter().map(|i| self.embed_multivector(i, max_tokens)).collect()
    }

    /// Output dimensionality when known up front.
    fn dim(&self) -> Option<usize> {
        None
    }
}

pub fn embed_text(provider: &dyn EmbeddingProvider, text: &str) -> Result<DenseEmbedding> {
    provider.embed_dense(&EmbedInput::text(text))
}

pub fn embed_text_multivector(
    provider: &dyn EmbeddingProvider,
    text: &str,
    max_tokens: usize,
) -> Result<MultiVectorEmbedding> {
    provider.embed_multivector(&EmbedInput::text(text), max_tokens)
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderKind {
    Synthetic {
        seed: u64,
        dim: usize,
    },
    PrecomputedFile {
        path: PathBuf,
    },
    Remote {
        base_url: String,
        timeout_ms: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

impl ProviderKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Synthetic { dim, .. } if *dim < MIN_SYNTHETIC_DIM => Err(Error::InvalidConfig(format!(
                "synthetic dim must be >= {MIN_SYNTHETIC_DIM}"
            ))),
            Self::Remote { timeout_ms: 0, .. } => Err(Error::InvalidConfig("remote timeout-ms must be >= 1".into())),
            Self::Remote { max_in_flight: 0, .. } => {
                Err(Error::InvalidConfig("remote max in-flight must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.validate()?;
        Ok(match self {
            Self::Synthetic { seed, dim } => Box::new(SyntheticProvider::new(*seed, *dim)?),
            Self::PrecomputedFile { path } => Box::new(PrecomputedProvider::open(path)?),
            Self::Remote {
                base_url,
                timeout_ms,
                max_in_flight,
            } => Box::new(RemoteProvider::new(base_url, *timeout_ms, *max_in_flight)?),
        })
    }
}
