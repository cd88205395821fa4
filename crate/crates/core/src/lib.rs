//! Retrieval engineering workbench: dense and late-interaction scoring,
//! HNSW search, contrastive losses with analytic gradients, hard-negative
//! mining, BEIR-style evaluation, checkpoint merging and embedding analysis.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod eval;
pub mod index;
pub mod losses;
pub mod merge;
pub mod mining;
pub mod providers;
pub mod scoring;
pub mod vector;

pub use error::{Error, Result};
pub use vector::{DenseEmbedding, DocId, MultiVectorEmbedding, QueryId, ScoredDoc};
