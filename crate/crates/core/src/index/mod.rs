//! Retrieval indexes and their on-disk layout.

mod dense;
pub mod hnsw;
mod multivector;
mod persist;

pub use dense::{build_dense_index, search_dense, DenseIndex, SearchMode};
pub use hnsw::{HnswGraph, HnswParams};
pub use multivector::{build_multivector_index, search_multivector, MultiVectorIndex};
pub use persist::{load_index, save_index, IndexKind, IndexMeta, StoredIndex, FORMAT_VERSION};
